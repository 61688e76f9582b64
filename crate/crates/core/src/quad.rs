//! Fixed and adaptive Gauss rules.
//!
//! Node tables come from `gauss-quad`; this module only adds panel
//! subdivision and the endpoint-weighted panels used for integrands that
//! behave like `(x - a)^p` at an end of the interval.

use std::sync::OnceLock;

use gauss_quad::{GaussJacobi, GaussLegendre};

/// Node/weight pairs on [-1, 1].
pub type Rule = Vec<(f64, f64)>;

fn legendre(n: usize) -> Rule {
    let rule = GaussLegendre::new(n.try_into().expect("degree > 0"));
    rule.as_node_weight_pairs().to_vec()
}

/// 8-point Gauss-Legendre rule (cached).
pub fn gl8() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| legendre(8))
}

/// 16-point Gauss-Legendre rule (cached).
pub fn gl16() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| legendre(16))
}

/// 32-point Gauss-Legendre rule (cached).
pub fn gl32() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| legendre(32))
}

/// Applies a rule on [-1, 1] to the interval [a, b].
#[inline]
pub fn apply<F: FnMut(f64) -> f64>(rule: &[(f64, f64)], a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for &(x, w) in rule {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive Gauss-Legendre: compares 16- and 32-point panels and bisects
/// until the panel estimates agree to `tol` (absolute, split across panels).
pub fn adaptive<F: Fn(f64) -> f64>(a: f64, b: f64, tol: f64, f: &F) -> f64 {
    adaptive_checked(a, b, tol, f).value
}

/// Result of [`adaptive_checked`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adaptive {
    pub value: f64,
    /// Sum of panel disagreements.
    pub error: f64,
    /// False when some panel hit the depth limit without agreeing.
    pub converged: bool,
}

pub fn adaptive_checked<F: Fn(f64) -> f64>(a: f64, b: f64, tol: f64, f: &F) -> Adaptive {
    fn rec<F: Fn(f64) -> f64>(a: f64, b: f64, tol: f64, f: &F, depth: u32, out: &mut Adaptive) {
        let coarse = apply(gl16(), a, b, f);
        let fine = apply(gl32(), a, b, f);
        let gap = (fine - coarse).abs();
        if gap <= tol || depth >= 40 {
            out.value += fine;
            out.error += gap;
            if gap > tol || !fine.is_finite() {
                out.converged = false;
            }
            return;
        }
        let m = 0.5 * (a + b);
        rec(a, m, 0.5 * tol, f, depth + 1, out);
        rec(m, b, 0.5 * tol, f, depth + 1, out);
    }
    let mut out = Adaptive {
        value: 0.0,
        error: 0.0,
        converged: true,
    };
    if a != b {
        rec(a, b, tol, f, 0, &mut out);
    }
    out
}

/// Gauss-Jacobi rule for the weight `(1 + x)^p` on [-1, 1].
#[derive(Clone, Debug)]
pub struct LeftWeighted {
    p: f64,
    rule: Rule,
}

impl LeftWeighted {
    pub fn new(n: usize, p: f64) -> Self {
        let rule = GaussJacobi::new(
            n.try_into().expect("degree > 0"),
            0.0.try_into().expect("finite"),
            p.try_into().expect("p > -1"),
        );
        Self {
            p,
            rule: rule.as_node_weight_pairs().to_vec(),
        }
    }

    /// Integrates `(x - a)^p f(x)` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for &(x, w) in &self.rule {
            acc += w * f(mid + half * x);
        }
        acc * half.powf(self.p + 1.0)
    }

    /// Integrates `(b - x)^p f(x)` over [a, b].
    pub fn integrate_right<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for &(x, w) in &self.rule {
            acc += w * f(mid - half * x);
        }
        acc * half.powf(self.p + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_matches_closed_form() {
        let v = adaptive(0.0, std::f64::consts::PI, 1e-13, &|x: f64| x.sin());
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_panel_handles_power_singularity() {
        // int_0^1 x^{2/3} dx = 3/5
        let rule = LeftWeighted::new(12, 2.0 / 3.0);
        assert!((rule.integrate(0.0, 1.0, |_| 1.0) - 0.6).abs() < 1e-13);
        // int_0^2 (2 - x)^{1/2} x dx = 16 sqrt(2) / 15
        let rule = LeftWeighted::new(12, 0.5);
        let v = rule.integrate_right(0.0, 2.0, |x| x);
        assert!((v - 16.0 * 2f64.sqrt() / 15.0).abs() < 1e-13);
    }
}
