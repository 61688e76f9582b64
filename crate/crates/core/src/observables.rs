//! Observables on phase space and the cusp-profile integral `I_v`.
//!
//! An observable is `v(r, theta) = h(d(r)) g_w(theta) - c w(r)` where `d` is
//! the arc-length distance to the cusp tip along wall `w`, `g_w` a
//! trigonometric series attached to that wall, `h` a smooth plateau bump
//! with `h(0) = 1` and `w` a smooth bump inside a closure arc. The constant
//! `c` makes the invariant-measure mean vanish.
//!
//! For a cusp with tip coordinates `r'` (end of the inbound wall) and `r''`
//! (start of the outbound wall) the profile integrand is
//! `S(theta) = g_in(theta) + g_out(pi - theta)` and
//! `I_v(s) = 1/2 int_0^s S(theta) sin(theta)^(1/alpha) dtheta`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{BoundaryState, PhasePoint};
use crate::geometry::{CurveKind, TableSpec};
use crate::quad::{self, LeftWeighted};

/// Absolute tolerance on `I_v(pi)` below which a curve is degenerate.
pub const CLASSIFY_TOL: f64 = 1e-9;

/// Relative decrease (against `|I_v(pi)|`) tolerated by the monotonicity test.
pub const MONOTONE_REL_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("observable `{name}`: {field}: {reason}")]
    Config {
        name: String,
        field: String,
        reason: String,
    },
}

/// `sum_k cos[k] cos(k theta) + sum_k sin[k] sin(k theta)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigSeries {
    #[serde(default)]
    pub cos: Vec<f64>,
    /// `sin[0]` is ignored.
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn constant(c: f64) -> Self {
        Self {
            cos: vec![c],
            sin: vec![],
        }
    }

    pub fn cosines(c: &[f64]) -> Self {
        Self {
            cos: c.to_vec(),
            sin: vec![],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().chain(self.sin.iter().skip(1)).all(|&a| a == 0.0)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        self.eval_cs(c, s)
    }

    /// Evaluates from `cos(theta)` and `sin(theta)` with the angle-addition
    /// recurrence.
    #[inline]
    pub fn eval_cs(&self, c1: f64, s1: f64) -> f64 {
        let n = self.cos.len().max(self.sin.len());
        let mut acc = self.cos.first().copied().unwrap_or(0.0);
        let (mut ck, mut sk) = (1.0, 0.0);
        for k in 1..n {
            let c_next = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = c_next;
            if let Some(a) = self.cos.get(k) {
                acc += a * ck;
            }
            if let Some(b) = self.sin.get(k) {
                acc += b * sk;
            }
        }
        acc
    }

    /// `g(pi - theta)` as a series in `theta`.
    pub fn reflected(&self) -> Self {
        let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
        Self {
            cos: self.cos.iter().enumerate().map(|(k, a)| a * sign(k)).collect(),
            sin: self.sin.iter().enumerate().map(|(k, b)| -b * sign(k)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let merge = |a: &[f64], b: &[f64]| {
            (0..a.len().max(b.len()))
                .map(|k| a.get(k).unwrap_or(&0.0) + b.get(k).unwrap_or(&0.0))
                .collect()
        };
        Self {
            cos: merge(&self.cos, &other.cos),
            sin: merge(&self.sin, &other.sin),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            cos: self.cos.iter().map(|x| a * x).collect(),
            sin: self.sin.iter().map(|x| a * x).collect(),
        }
    }

    /// `int_0^pi g(theta) sin(theta) dtheta`.
    pub fn sine_moment(&self) -> f64 {
        let f = |t: f64| self.eval(t) * t.sin();
        quad::adaptive(0.0, PI, 1e-15, &f)
    }
}

/// `exp(-1/x)` for `x > 0`, else 0.
fn flat(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step from 1 at `x <= 0` to 0 at `x >= 1`.
fn smooth_step(x: f64) -> f64 {
    let a = flat(1.0 - x);
    let b = flat(x);
    a / (a + b)
}

/// Smooth compactly supported bump in a distance: 1 on `[0, plateau]`,
/// vanishing from `radius` on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub plateau: f64,
    pub radius: f64,
}

impl Bump {
    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        if d <= self.plateau {
            1.0
        } else if d >= self.radius {
            0.0
        } else {
            smooth_step((d - self.plateau) / (self.radius - self.plateau))
        }
    }

    /// `int_0^len` of the bump.
    pub fn integral(&self, len: f64) -> f64 {
        let a = self.plateau.min(len);
        let b = self.radius.min(len);
        let f = |d: f64| self.eval(d);
        a + if b > a { quad::adaptive(a, b, 1e-15, &f) } else { 0.0 }
    }
}

impl Default for Bump {
    fn default() -> Self {
        Self {
            plateau: 0.4,
            radius: 0.8,
        }
    }
}

/// Where the normalizing bump `w` lives: a window on a closure arc given by
/// its center and half width as fractions of the arc length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceWindow {
    #[serde(default)]
    pub arc: usize,
    pub center: f64,
    pub half_width: f64,
}

impl Default for ReferenceWindow {
    fn default() -> Self {
        Self {
            arc: 0,
            center: 0.5,
            half_width: 0.4,
        }
    }
}

fn window_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// Angular profiles on the two walls of one cusp.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspProfile {
    /// Wall traversed toward the tip (carries `r'`).
    #[serde(default)]
    pub inbound: TrigSeries,
    /// Wall traversed away from the tip (carries `r''`).
    #[serde(default)]
    pub outbound: TrigSeries,
}

impl CuspProfile {
    pub fn symmetric(g: TrigSeries) -> Self {
        Self {
            inbound: g.clone(),
            outbound: g,
        }
    }

    /// `S(theta) = g_in(theta) + g_out(pi - theta)`.
    pub fn wall_sum(&self) -> TrigSeries {
        self.inbound.add(&self.outbound.reflected())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub name: String,
    /// One entry per cusp; missing cusps carry the zero profile.
    pub profiles: Vec<CuspProfile>,
    #[serde(default)]
    pub bump: Bump,
    #[serde(default)]
    pub reference: ReferenceWindow,
    #[serde(default)]
    pub mean_correction: f64,
}

impl ObservableSpec {
    pub fn single(name: &str, profile: CuspProfile) -> Self {
        Self {
            name: name.to_string(),
            profiles: vec![profile],
            bump: Bump::default(),
            reference: ReferenceWindow::default(),
            mean_correction: 0.0,
        }
    }

    pub fn profile(&self, cusp: usize) -> CuspProfile {
        self.profiles.get(cusp).cloned().unwrap_or_default()
    }

    /// `a * self` (mean correction included).
    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.profiles {
            p.inbound = p.inbound.scaled(a);
            p.outbound = p.outbound.scaled(a);
        }
        out.mean_correction *= a;
        out
    }

    /// `self + other`; both must share bump and reference window.
    pub fn plus(&self, other: &Self) -> Self {
        let n = self.profiles.len().max(other.profiles.len());
        let mut out = self.clone();
        out.profiles = (0..n)
            .map(|i| {
                let a = self.profile(i);
                let b = other.profile(i);
                CuspProfile {
                    inbound: a.inbound.add(&b.inbound),
                    outbound: a.outbound.add(&b.outbound),
                }
            })
            .collect();
        out.mean_correction += other.mean_correction;
        out
    }

    pub fn validate(&self, table: &TableSpec) -> Result<(), ObservableError> {
        let bad = |field: &str, reason: String| ObservableError::Config {
            name: self.name.clone(),
            field: field.to_string(),
            reason,
        };
        let b = self.bump;
        if !(b.plateau >= 0.0 && b.radius > b.plateau && b.radius.is_finite()) {
            return Err(bad("bump", "need 0 <= plateau < radius".into()));
        }
        let shortest = table
            .curves
            .iter()
            .filter(|c| c.is_wall())
            .map(|c| c.length)
            .fold(f64::INFINITY, f64::min);
        if b.radius > shortest {
            return Err(bad(
                "bump.radius",
                format!("exceeds the shortest wall length {shortest}"),
            ));
        }
        if self.profiles.len() > table.cusps.len() {
            return Err(bad(
                "profiles",
                format!("{} profiles for {} cusps", self.profiles.len(), table.cusps.len()),
            ));
        }
        let r = self.reference;
        if arc_curve(table, r.arc).is_none() {
            return Err(bad("reference.arc", format!("no closure arc {}", r.arc)));
        }
        if !(r.half_width > 0.0 && r.center - r.half_width >= 0.0 && r.center + r.half_width <= 1.0)
        {
            return Err(bad("reference", "window must lie inside the arc".into()));
        }
        Ok(())
    }
}

fn arc_curve(table: &TableSpec, arc: usize) -> Option<usize> {
    table
        .curves
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_wall())
        .nth(arc)
        .map(|(k, _)| k)
}

/// `mu`-mean of the wall part `h g` and of the reference bump `w`.
fn wall_and_reference_means(spec: &ObservableSpec, table: &TableSpec) -> (f64, f64) {
    let norm = 1.0 / (2.0 * table.total_length);
    let mut wall = 0.0;
    for curve in &table.curves {
        if let CurveKind::Wall(w) = &curve.kind {
            let p = spec.profile(w.cusp);
            let g = if w.inbound { &p.inbound } else { &p.outbound };
            wall += spec.bump.integral(curve.length) * g.sine_moment();
        }
    }
    let k = arc_curve(table, spec.reference.arc).expect("validated reference arc");
    let hw = spec.reference.half_width * table.curves[k].length;
    let f = |x: f64| window_bump(x);
    // the angular factor integrates sin over [0, pi] to 2
    let reference = hw * quad::adaptive(-1.0, 1.0, 1e-15, &f) * 2.0;
    (wall * norm, reference * norm)
}

/// Sets the mean correction so that the `mu`-mean of `v` vanishes.
pub fn make_mean_zero(spec: &ObservableSpec, table: &TableSpec) -> Result<ObservableSpec, ObservableError> {
    spec.validate(table)?;
    let (wall, reference) = wall_and_reference_means(spec, table);
    if reference.abs() < 1e-12 {
        return Err(ObservableError::Config {
            name: spec.name.clone(),
            field: "reference".into(),
            reason: format!("reference bump mean {reference} is too small"),
        });
    }
    let mut out = spec.clone();
    out.mean_correction = wall / reference;
    Ok(out)
}

/// `mu`-mean of `v` by quadrature.
pub fn mu_mean(spec: &ObservableSpec, table: &TableSpec) -> f64 {
    let (wall, reference) = wall_and_reference_means(spec, table);
    wall - spec.mean_correction * reference
}

#[derive(Clone, Debug)]
enum Role {
    Wall {
        g: TrigSeries,
        inbound: bool,
        /// `s * k` bounds the arc length from the tip to `s`.
        length_bound: f64,
    },
    Reference {
        center: f64,
        half_width: f64,
        radius: f64,
    },
    Zero,
}

/// An observable bound to a table for fast evaluation along orbits.
#[derive(Clone, Debug)]
pub struct Observable<'t> {
    pub spec: ObservableSpec,
    table: &'t TableSpec,
    roles: Vec<Role>,
}

impl<'t> Observable<'t> {
    pub fn new(spec: &ObservableSpec, table: &'t TableSpec) -> Result<Self, ObservableError> {
        spec.validate(table)?;
        let reference_curve = arc_curve(table, spec.reference.arc);
        let roles = table
            .curves
            .iter()
            .enumerate()
            .map(|(k, curve)| match &curve.kind {
                CurveKind::Wall(w) => {
                    let p = spec.profile(w.cusp);
                    let g = if w.inbound { p.inbound } else { p.outbound };
                    if g.is_zero() {
                        Role::Zero
                    } else {
                        Role::Wall {
                            g,
                            inbound: w.inbound,
                            length_bound: 1.0 + w.coef * w.s_max.powf(w.beta - 1.0),
                        }
                    }
                }
                CurveKind::Arc(a) if Some(k) == reference_curve => Role::Reference {
                    center: spec.reference.center * curve.length,
                    half_width: spec.reference.half_width * curve.length,
                    radius: a.radius,
                },
                CurveKind::Arc(_) => Role::Zero,
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            table,
            roles,
        })
    }

    /// Value at a stepper state.
    #[inline]
    pub fn at_state(&self, x: &BoundaryState) -> f64 {
        match &self.roles[x.curve] {
            Role::Zero => 0.0,
            Role::Wall { g, length_bound, .. } => {
                let s = x.param;
                let h = if s * length_bound <= self.spec.bump.plateau {
                    1.0
                } else {
                    let w = self.table.curves[x.curve].as_wall().expect("wall role");
                    self.spec.bump.eval(w.length_to(s))
                };
                if h == 0.0 {
                    0.0
                } else {
                    h * g.eval_cs(x.cos_theta, x.sin_theta)
                }
            }
            Role::Reference {
                center,
                half_width,
                radius,
            } => {
                let d = x.param * radius - center;
                -self.spec.mean_correction * window_bump(d / half_width)
            }
        }
    }

    /// Value at a phase point; singular points evaluate by continuity of
    /// the formula at the nearest regular parameter.
    pub fn eval(&self, x: PhasePoint) -> f64 {
        let k = match self.table.curve_index(x.r.rem_euclid(self.table.total_length)) {
            Ok(k) => k,
            Err(_) => return 0.0,
        };
        let curve = &self.table.curves[k];
        let u = (x.r - curve.r_start).clamp(0.0, curve.length);
        let (s, c) = x.theta.sin_cos();
        match &self.roles[k] {
            Role::Zero => 0.0,
            Role::Wall { g, inbound, .. } => {
                let d = if *inbound { curve.length - u } else { u };
                self.spec.bump.eval(d) * g.eval_cs(c, s)
            }
            Role::Reference {
                center, half_width, ..
            } => -self.spec.mean_correction * window_bump((u - center) / half_width),
        }
    }
}

/// `v(r, theta)` for a spec and table.
pub fn eval_v(spec: &ObservableSpec, table: &TableSpec, x: PhasePoint) -> Result<f64, ObservableError> {
    Ok(Observable::new(spec, table)?.eval(x))
}

/// Verdict of the profile classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    M1,
    #[serde(rename = "M2_only")]
    M2Only,
    #[serde(rename = "Fails_over")]
    FailsOver,
    #[serde(rename = "Fails_under")]
    FailsUnder,
    Degenerate,
}

impl Verdict {
    pub const ALL: [Verdict; 5] = [
        Verdict::M1,
        Verdict::M2Only,
        Verdict::FailsOver,
        Verdict::FailsUnder,
        Verdict::Degenerate,
    ];

    pub fn from_name(name: &str) -> Option<Verdict> {
        Self::ALL.into_iter().find(|v| v.to_string() == name)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::M1 => "M1",
            Verdict::M2Only => "M2_only",
            Verdict::FailsOver => "Fails_over",
            Verdict::FailsUnder => "Fails_under",
            Verdict::Degenerate => "Degenerate",
        };
        f.write_str(s)
    }
}

/// Cumulative integral of `1/2 S(theta) sin(theta)^p` on a panel grid with
/// endpoint-weighted panels at 0 and pi.
#[derive(Clone, Debug)]
pub struct ProfileIntegral {
    pub series: TrigSeries,
    pub p: f64,
    knots: Vec<f64>,
    cum: Vec<f64>,
    left: LeftWeighted,
}

const PROFILE_PANELS: usize = 512;

impl ProfileIntegral {
    pub fn new(series: &TrigSeries, alpha: f64) -> Self {
        let p = 1.0 / alpha;
        let knots: Vec<f64> = (0..=PROFILE_PANELS)
            .map(|i| PI * i as f64 / PROFILE_PANELS as f64)
            .collect();
        let mut me = Self {
            series: series.clone(),
            p,
            knots,
            cum: vec![0.0; PROFILE_PANELS + 1],
            left: LeftWeighted::new(20, p),
        };
        for i in 0..PROFILE_PANELS {
            let (a, b) = (me.knots[i], me.knots[i + 1]);
            me.cum[i + 1] = me.cum[i] + me.piece(a, b);
        }
        me
    }

    #[inline]
    fn integrand(&self, t: f64) -> f64 {
        0.5 * self.series.eval(t) * t.sin().powf(self.p)
    }

    fn from_tip(&self, b: f64) -> f64 {
        let p = self.p;
        self.left
            .integrate(0.0, b, |t| 0.5 * self.series.eval(t) * (t.sin() / t).powf(p))
    }

    fn to_end(&self, a: f64) -> f64 {
        let p = self.p;
        self.left.integrate_right(a, PI, |t| {
            0.5 * self.series.eval(t) * (t.sin() / (PI - t)).powf(p)
        })
    }

    /// Integral over `[a, b]` inside one panel.
    fn piece(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let h = PI / PROFILE_PANELS as f64;
        if b <= h * 1.000_000_1 {
            let lower = if a > 0.0 { self.from_tip(a) } else { 0.0 };
            return self.from_tip(b) - lower;
        }
        if a >= PI - h * 1.000_000_1 {
            let upper = if b < PI { self.to_end(b) } else { 0.0 };
            return self.to_end(a) - upper;
        }
        quad::apply(quad::gl16(), a, b, |t| self.integrand(t))
    }

    /// `I(s)` for `s` in `[0, pi]`.
    pub fn value(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, PI);
        if s == PI {
            return self.cum[PROFILE_PANELS];
        }
        let h = PI / PROFILE_PANELS as f64;
        let i = ((s / h) as usize).min(PROFILE_PANELS - 1);
        let a = self.knots[i];
        self.cum[i] + self.piece(a, s)
    }

    pub fn total(&self) -> f64 {
        self.cum[PROFILE_PANELS]
    }

    /// Derivative `1/2 S(s) sin(s)^p`.
    pub fn density(&self, s: f64) -> f64 {
        self.integrand(s)
    }
}

/// `Psi(s) = I_1(s) / I_1(pi)` with `I_1` built from `v = 1`.
#[derive(Clone, Debug)]
pub struct Psi {
    integral: ProfileIntegral,
}

impl Psi {
    pub fn new(alpha: f64) -> Self {
        Self {
            integral: ProfileIntegral::new(&TrigSeries::constant(2.0), alpha),
        }
    }

    /// `I_1(pi) = int_0^pi sin^(1/alpha)`.
    pub fn i1_pi(&self) -> f64 {
        self.integral.total()
    }

    pub fn psi(&self, s: f64) -> f64 {
        self.integral.value(s) / self.integral.total()
    }

    /// Inverse by monotone bisection to `1e-10` in `s`, started from the
    /// tabulated panel.
    pub fn psi_inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if u == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return PI;
        }
        let target = u * self.integral.total();
        let k = self.integral.cum.partition_point(|&c| c <= target);
        let mut lo = self.integral.knots[k.saturating_sub(1)];
        let mut hi = self.integral.knots[k.min(PROFILE_PANELS)];
        while hi - lo > 1e-12 {
            let m = 0.5 * (lo + hi);
            if self.integral.value(m) < target {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `ell* = floor(phi Psi(s*))`, clamped to `[0, phi]`.
pub fn ell_star(phi: u64, psi_s_star: f64) -> u64 {
    let l = (phi as f64 * psi_s_star).floor();
    (l.max(0.0) as u64).min(phi)
}

/// Sampled `I_v` with extremal statistics and verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvCurve {
    pub alpha: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub iv_pi: f64,
    pub iv_star: f64,
    pub s_star: f64,
    pub iv_min: f64,
    pub s_min: f64,
    pub verdict: Verdict,
}

impl IvCurve {
    /// Curve of `c v` for `c = -1`, i.e. the sign-normalized view.
    fn negated(&self) -> IvCurve {
        IvCurve {
            values: self.values.iter().map(|v| -v).collect(),
            iv_pi: -self.iv_pi,
            iv_star: -self.iv_min,
            s_star: self.s_min,
            iv_min: -self.iv_star,
            s_min: self.s_star,
            ..self.clone()
        }
    }

    /// Overshoot ratio `I_v* / I_v(pi)` after sign normalization.
    pub fn overshoot_ratio(&self) -> f64 {
        if self.iv_pi >= 0.0 {
            self.iv_star / self.iv_pi
        } else {
            self.iv_min / self.iv_pi
        }
    }

    /// Argmax after sign normalization.
    pub fn normalized_s_star(&self) -> f64 {
        if self.iv_pi >= 0.0 {
            self.s_star
        } else {
            self.s_min
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,iv\n");
        for (s, v) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{s:.17e},{v:.17e}\n"));
        }
        out
    }
}

/// Classification of a sampled curve.
pub fn classify(curve: &IvCurve) -> Verdict {
    if !(curve.iv_pi.abs() > CLASSIFY_TOL) {
        return Verdict::Degenerate;
    }
    let c = if curve.iv_pi < 0.0 {
        curve.negated()
    } else {
        curve.clone()
    };
    let slack = MONOTONE_REL_TOL * c.iv_pi.abs();
    let monotone = c.values.windows(2).all(|w| w[1] >= w[0] - slack);
    if monotone {
        Verdict::M1
    } else if c.iv_star > c.iv_pi + CLASSIFY_TOL {
        Verdict::FailsOver
    } else if c.iv_min < -CLASSIFY_TOL {
        Verdict::FailsUnder
    } else {
        Verdict::M2Only
    }
}

/// Extra grid points spread over base intervals where `S` changes sign.
const SIGN_CHANGE_POINTS: usize = 4096;

/// Samples `I_v` for one cusp of a spec.
pub fn iv_curve_for(profile: &CuspProfile, alpha: f64, grid_size: usize) -> IvCurve {
    assert!(alpha > 1.0 && alpha < 2.0, "alpha must lie in (1, 2)");
    let grid_size = grid_size.max(64);
    let series = profile.wall_sum();
    let integral = ProfileIntegral::new(&series, alpha);
    let s_of = |t: f64| series.eval(t);

    let base: Vec<f64> = (0..=grid_size).map(|i| PI * i as f64 / grid_size as f64).collect();
    let mut flagged = Vec::new();
    for (i, w) in base.windows(2).enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..=16 {
            let v = s_of(w[0] + (w[1] - w[0]) * j as f64 / 16.0);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo < 0.0 && hi > 0.0 {
            flagged.push(i);
        }
    }
    let mut grid = Vec::with_capacity(base.len() + SIGN_CHANGE_POINTS);
    let per = if flagged.is_empty() {
        0
    } else {
        SIGN_CHANGE_POINTS / flagged.len()
    };
    for (i, w) in base.windows(2).enumerate() {
        grid.push(w[0]);
        if flagged.binary_search(&i).is_ok() {
            for j in 1..=per {
                grid.push(w[0] + (w[1] - w[0]) * j as f64 / (per + 1) as f64);
            }
        }
    }
    grid.push(PI);

    let values: Vec<f64> = grid.iter().map(|&s| integral.value(s)).collect();
    let iv_pi = *values.last().expect("nonempty grid");

    let refine = |k: usize, want_max: bool| -> (f64, f64) {
        // root of S next to a grid extremum
        let mut best = (grid[k], values[k]);
        let lo_i = k.saturating_sub(1);
        let hi_i = (k + 1).min(grid.len() - 1);
        for (a, b) in [(grid[lo_i], grid[k]), (grid[k], grid[hi_i])] {
            let (fa, fb) = (s_of(a), s_of(b));
            if b > a && fa * fb < 0.0 {
                let (mut x0, mut x1) = (a, b);
                for _ in 0..80 {
                    let m = 0.5 * (x0 + x1);
                    if s_of(m) * fa > 0.0 {
                        x0 = m;
                    } else {
                        x1 = m;
                    }
                }
                let s = 0.5 * (x0 + x1);
                let v = integral.value(s);
                if (want_max && v > best.1) || (!want_max && v < best.1) {
                    best = (s, v);
                }
            }
        }
        best
    };

    let mut k_max = 0;
    let mut k_min = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[k_max] {
            k_max = k;
        }
        if v < values[k_min] {
            k_min = k;
        }
    }
    let (s_star, iv_star) = refine(k_max, true);
    let (s_min, iv_min) = refine(k_min, false);
    let mut curve = IvCurve {
        alpha,
        grid,
        values,
        iv_pi,
        iv_star: iv_star.max(iv_pi),
        s_star,
        iv_min: iv_min.min(iv_pi),
        s_min,
        verdict: Verdict::Degenerate,
    };
    curve.verdict = classify(&curve);
    curve
}

/// `I_v` for the single cusp of a table (cusp 0).
pub fn iv_curve(spec: &ObservableSpec, alpha: f64, grid_size: usize) -> IvCurve {
    iv_curve_for(&spec.profile(0), alpha, grid_size)
}

/// Per-cusp curves and the combined verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiCuspCurves {
    /// `(cusp index, curve)` for every cusp of maximal flatness.
    pub curves: Vec<(usize, IvCurve)>,
    pub overall: Verdict,
}

pub fn multi_cusp_curves(spec: &ObservableSpec, table: &TableSpec, grid_size: usize) -> MultiCuspCurves {
    let beta = table.beta();
    let alpha = beta / (beta - 1.0);
    let curves: Vec<(usize, IvCurve)> = table
        .cusps
        .iter()
        .enumerate()
        .filter(|(_, c)| (c.beta - beta).abs() <= 1e-12 * beta)
        .map(|(i, _)| (i, iv_curve_for(&spec.profile(i), alpha, grid_size)))
        .collect();
    let verdicts: Vec<Verdict> = curves.iter().map(|(_, c)| c.verdict).collect();
    let overall = combine_verdicts(&verdicts);
    MultiCuspCurves { curves, overall }
}

/// Conjunction over cusps: degenerate cusps count as monotone and in range.
pub fn combine_verdicts(verdicts: &[Verdict]) -> Verdict {
    if verdicts.iter().all(|v| *v == Verdict::Degenerate) {
        return Verdict::Degenerate;
    }
    if verdicts.contains(&Verdict::FailsOver) {
        Verdict::FailsOver
    } else if verdicts.contains(&Verdict::FailsUnder) {
        Verdict::FailsUnder
    } else if verdicts.iter().all(|v| matches!(v, Verdict::M1 | Verdict::Degenerate)) {
        Verdict::M1
    } else {
        Verdict::M2Only
    }
}

/// Predicted excursion profile `l -> phi I_1(pi)^-1 I_v(Psi^-1(l / phi))`,
/// tabulated on a uniform grid in `l / phi`.
#[derive(Clone, Debug)]
pub struct ProfileModel {
    pub i1_pi: f64,
    pub iv_pi: f64,
    table: Vec<f64>,
}

const PROFILE_TABLE: usize = 4096;

impl ProfileModel {
    pub fn new(profile: &CuspProfile, alpha: f64) -> Self {
        let psi = Psi::new(alpha);
        let iv = ProfileIntegral::new(&profile.wall_sum(), alpha);
        let table = (0..=PROFILE_TABLE)
            .map(|i| iv.value(psi.psi_inverse(i as f64 / PROFILE_TABLE as f64)))
            .collect();
        Self {
            i1_pi: psi.i1_pi(),
            iv_pi: iv.total(),
            table,
        }
    }

    /// `I_v(Psi^-1(u))` by linear interpolation.
    pub fn shape(&self, u: f64) -> f64 {
        let x = u.clamp(0.0, 1.0) * PROFILE_TABLE as f64;
        let i = (x as usize).min(PROFILE_TABLE - 1);
        let f = x - i as f64;
        self.table[i] * (1.0 - f) + self.table[i + 1] * f
    }

    pub fn predicted(&self, ell: u64, phi: u64) -> f64 {
        phi as f64 / self.i1_pi * self.shape(ell as f64 / phi as f64)
    }
}

/// Sup-distance of a partial-sum sequence from the predicted profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileResidual {
    pub phi: u64,
    pub residual: f64,
    pub normalized: f64,
}

/// `partial_sums[l] = v_l` for `0 <= l <= phi`.
pub fn excursion_profile_residual(partial_sums: &[f64], model: &ProfileModel) -> ProfileResidual {
    let phi = (partial_sums.len() - 1) as u64;
    let residual = partial_sums
        .iter()
        .enumerate()
        .map(|(l, v)| (v - model.predicted(l as u64, phi)).abs())
        .fold(0.0, f64::max);
    ProfileResidual {
        phi,
        residual,
        normalized: residual / phi as f64,
    }
}

/// Shipped fixtures. All are symmetric in the two walls except
/// `profile_skew` and `overshoot_skew`, whose wall sums are not even
/// about `pi / 2`.
pub mod fixtures {
    use super::*;

    /// `g = 1` on both walls: `S = 2`.
    pub fn m1() -> ObservableSpec {
        ObservableSpec::single("m1", CuspProfile::symmetric(TrigSeries::constant(1.0)))
    }

    /// `S = 1 + 1.8 cos 2 theta`: dips but stays in `[0, I_v(pi)]`.
    pub fn m2_only() -> ObservableSpec {
        ObservableSpec::single("m2_only", CuspProfile::symmetric(TrigSeries::cosines(&[0.5, 0.0, 0.9])))
    }

    /// `S = cos 2 theta + 0.35`.
    pub fn fails_over() -> ObservableSpec {
        ObservableSpec::single(
            "fails_over",
            CuspProfile::symmetric(TrigSeries::cosines(&[0.175, 0.0, 0.5])),
        )
    }

    /// `g = cos theta` on both walls: `S = 0`.
    pub fn degenerate() -> ObservableSpec {
        ObservableSpec::single("degenerate", CuspProfile::symmetric(TrigSeries::cosines(&[0.0, 1.0])))
    }

    /// `S = 1 + 4 cos theta`: overshoot with no undershoot.
    pub fn overshoot_skew() -> ObservableSpec {
        ObservableSpec::single(
            "overshoot_skew",
            CuspProfile {
                inbound: TrigSeries::cosines(&[0.5, 2.0]),
                outbound: TrigSeries::cosines(&[0.5, -2.0]),
            },
        )
    }

    /// `S = 2 + 2 cos theta`: monotone, front-loaded profile.
    pub fn profile_skew() -> ObservableSpec {
        ObservableSpec::single(
            "profile_skew",
            CuspProfile {
                inbound: TrigSeries::cosines(&[1.0, 1.0]),
                outbound: TrigSeries::cosines(&[1.0, -1.0]),
            },
        )
    }

    pub fn all() -> Vec<ObservableSpec> {
        vec![m1(), m2_only(), fails_over(), degenerate(), overshoot_skew(), profile_skew()]
    }

    pub fn by_name(name: &str) -> Option<ObservableSpec> {
        all().into_iter().find(|s| s.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_table, TableConfig};

    fn drop3() -> TableSpec {
        build_table(&TableConfig::drop(3.0, 1.0, 2.0)).unwrap()
    }

    #[test]
    fn series_recurrence_matches_direct_evaluation() {
        let g = TrigSeries {
            cos: vec![0.3, -1.0, 0.5, 0.25],
            sin: vec![9.0, 0.7, -0.2],
        };
        for i in 0..50 {
            let t = PI * i as f64 / 49.0;
            let direct = 0.3 - t.cos() + 0.5 * (2.0 * t).cos() + 0.25 * (3.0 * t).cos()
                + 0.7 * t.sin()
                - 0.2 * (2.0 * t).sin();
            assert!((g.eval(t) - direct).abs() < 1e-13);
            assert!((g.reflected().eval(t) - g.eval(PI - t)).abs() < 1e-13);
        }
    }

    #[test]
    fn bump_is_one_at_tip_and_compact() {
        let b = Bump::default();
        assert_eq!(b.eval(0.0), 1.0);
        assert_eq!(b.eval(b.radius), 0.0);
        assert!(b.eval(0.6) > 0.0 && b.eval(0.6) < 1.0);
    }

    #[test]
    fn zero_profile_needs_no_correction() {
        let t = drop3();
        let spec = ObservableSpec::single("zero", CuspProfile::default());
        let s = make_mean_zero(&spec, &t).unwrap();
        assert_eq!(s.mean_correction, 0.0);
        let v = Observable::new(&s, &t).unwrap();
        assert_eq!(v.eval(PhasePoint::new(0.5, 1.0)), 0.0);
    }

    #[test]
    fn mean_correction_is_linear() {
        let t = drop3();
        let a = make_mean_zero(&fixtures::m1(), &t).unwrap();
        let b = make_mean_zero(&fixtures::m1().scaled(2.0), &t).unwrap();
        assert!((b.mean_correction - 2.0 * a.mean_correction).abs() < 1e-12);
        assert!(mu_mean(&a, &t).abs() < 1e-12);
    }

    #[test]
    fn iv_of_constant_profile_has_closed_form() {
        // S = 2 gives I(pi) = int sin^(2/3) = sqrt(pi) G(5/6) / G(4/3)
        let c = iv_curve(&fixtures::m1(), 1.5, 64);
        let g = statrs::function::gamma::gamma;
        let exact = PI.sqrt() * g(5.0 / 6.0) / g(4.0 / 3.0);
        assert!((c.iv_pi - exact).abs() < 1e-12, "{} vs {exact}", c.iv_pi);
        assert_eq!(c.values[0], 0.0);
        assert_eq!(c.verdict, Verdict::M1);
    }

    #[test]
    fn psi_round_trip() {
        let psi = Psi::new(1.5);
        assert_eq!(psi.psi(0.0), 0.0);
        assert!((psi.psi(PI) - 1.0).abs() < 1e-15);
        for i in 0..100 {
            let s = PI * i as f64 / 99.0;
            assert!((psi.psi_inverse(psi.psi(s)) - s).abs() < 1e-9);
        }
    }

    #[test]
    fn ell_star_floors() {
        assert_eq!(ell_star(10, 0.5), 5);
        assert_eq!(ell_star(1, 0.3), 0);
        assert_eq!(ell_star(7, 1.0), 7);
    }

    #[test]
    fn verdicts_of_fixtures() {
        let v = |s: ObservableSpec| iv_curve(&s, 1.5, 256).verdict;
        assert_eq!(v(fixtures::m1()), Verdict::M1);
        assert_eq!(v(fixtures::m2_only()), Verdict::M2Only);
        assert_eq!(v(fixtures::fails_over()), Verdict::FailsOver);
        assert_eq!(v(fixtures::degenerate()), Verdict::Degenerate);
        assert_eq!(v(fixtures::overshoot_skew()), Verdict::FailsOver);
        assert_eq!(v(fixtures::profile_skew()), Verdict::M1);
    }

    #[test]
    fn negation_swaps_over_and_under_in_raw_coordinates() {
        let up = iv_curve(&fixtures::overshoot_skew(), 1.5, 256);
        let down = iv_curve(&fixtures::overshoot_skew().scaled(-1.0), 1.5, 256);
        // raw: the overshoot of v is an undershoot of -v below its endpoint
        assert!(up.iv_star > up.iv_pi + 1e-3 && up.iv_min > -1e-12);
        assert!(down.iv_min < down.iv_pi - 1e-3 && down.iv_star < 1e-12);
        // normalized verdicts agree
        assert_eq!(down.verdict, Verdict::FailsOver);
        assert!((up.overshoot_ratio() - down.overshoot_ratio()).abs() < 1e-12);
    }

    #[test]
    fn combination_rule() {
        use Verdict::*;
        assert_eq!(combine_verdicts(&[M1, M2Only]), M2Only);
        assert_eq!(combine_verdicts(&[M1, Degenerate]), M1);
        assert_eq!(combine_verdicts(&[M2Only, FailsOver]), FailsOver);
        assert_eq!(combine_verdicts(&[Degenerate, Degenerate]), Degenerate);
    }
}
