use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cusp_core::inducing::ReturnStats;
use cusp_core::lab::experiments::{self, LabError};
use cusp_core::lab::{ConfigError, ExperimentConfig, Status};
use cusp_core::observables::{fixtures, ProfileModel, Psi};
use cusp_core::parallel::ExecMode;

/// Desk-sized configuration for fast end-to-end runs.
fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.geometry.samples = 500;
    c.kac.returns = 3_000;
    c.kac.chunks = 4;
    c.tail.betas = vec![3.0];
    c.tail.returns = 20_000;
    c.tail.chunks = 4;
    c.tail.hill_k = vec![200];
    c.tail.bootstrap = 20;
    c.marginal.n_grid = vec![100, 300];
    c.marginal.replicas = 100;
    c.marginal.trend_seeds = 2;
    c.excursions.returns = 20_000;
    c.excursions.chunks = 4;
    c.witness.paths = 8;
    c.witness.n = 500;
    c.jumps.n = 500;
    c.jumps.paths = 80;
    c.jumps.levy_paths = 100;
    c.jumps.levy_resolution = 50;
    c.metrics.n_grid = vec![200, 400];
    c.metrics.paths = 6;
    c.metrics.exact_paths = 2;
    c.metrics.budget = 150;
    c.validate().unwrap();
    c
}

fn fast_suite(cfg: &ExperimentConfig) -> String {
    let sweep = experiments::excursion_sweep(cfg).unwrap();
    let curve = experiments::witness_window_curve(cfg).unwrap();
    let parts = [
        experiments::run_table_check(cfg).unwrap(),
        experiments::run_kac(cfg).unwrap(),
        experiments::run_tail_experiment(cfg).unwrap(),
        experiments::run_marginal_experiment(cfg).unwrap(),
        experiments::profile_report(cfg, &sweep),
        experiments::witness_report(cfg, &sweep, &curve),
        experiments::run_jump_experiment(cfg).unwrap(),
        experiments::run_metric_experiment(cfg).unwrap(),
    ];
    parts.iter().map(|r| r.to_json()).collect::<Vec<_>>().join("\n")
}

#[test]
fn shipped_config_equals_defaults() {
    let text = include_str!("../../../configs/default.toml");
    assert_eq!(ExperimentConfig::from_toml(text).unwrap(), ExperimentConfig::default());
}

#[test]
fn config_round_trips_through_toml() {
    let c = small();
    let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert_ne!(c.hash(), ExperimentConfig::default().hash());
}

#[test]
fn validation_names_the_field() {
    let path_of = |e: ConfigError| match e {
        ConfigError::Field { path, .. } => path,
        other => panic!("expected a field error, got {other}"),
    };
    let mut c = ExperimentConfig::default();
    c.shards = 0;
    assert_eq!(path_of(c.validate().unwrap_err()), "shards");
    let mut c = ExperimentConfig::default();
    c.marginal.fixture = "nope".into();
    assert_eq!(path_of(c.validate().unwrap_err()), "marginal.fixture");
    let mut c = ExperimentConfig::default();
    c.witness.overshoot = vec!["profile_skew".into()];
    assert_eq!(path_of(c.validate().unwrap_err()), "witness.overshoot[0]");
    let mut c = ExperimentConfig::default();
    c.jumps.calibration_b = 3.0;
    assert_eq!(path_of(c.validate().unwrap_err()), "jumps.calibration_b");
    assert!(matches!(
        ExperimentConfig::from_toml("sed = 3"),
        Err(ConfigError::Parse(_))
    ));
}

#[test]
fn reports_are_deterministic_and_shard_independent() {
    let a = small();
    let first = fast_suite(&a);
    assert_eq!(first, fast_suite(&a));
    let mut b = a.clone();
    b.shards = 3;
    b.exec = ExecMode::Sequential;
    let mut c = a.clone();
    c.shards = 1;
    c.out = "elsewhere".into();
    assert_eq!(first, fast_suite(&b));
    assert_eq!(first, fast_suite(&c));
    let mut d = a.clone();
    d.seed += 1;
    assert_ne!(first, fast_suite(&d));
}

#[test]
fn degenerate_observable_is_refused() {
    let mut c = small();
    c.marginal.fixture = "degenerate".into();
    assert!(matches!(
        experiments::run_marginal_experiment(&c),
        Err(LabError::Degenerate(_))
    ));
    c.jumps.fixture = "degenerate".into();
    assert!(matches!(experiments::run_jump_experiment(&c), Err(LabError::Degenerate(_))));
}

#[test]
fn underpowered_runs_are_inconclusive() {
    let mut c = small();
    c.excursions.returns = 2_000;
    let sweep = experiments::excursion_sweep(&c).unwrap();
    let profile = experiments::profile_report(&c, &sweep);
    assert_eq!(profile.check_named("deep_excursions").unwrap().status, Status::Inconclusive);
    let curve = experiments::witness_window_curve(&c).unwrap();
    let witness = experiments::witness_report(&c, &sweep, &curve);
    assert_eq!(witness.status, Status::Inconclusive);
}

#[test]
fn small_runs_keep_exact_identities() {
    let c = small();
    let jumps = experiments::run_jump_experiment(&c).unwrap();
    for name in ["decomposition_identity", "composition_gap"] {
        assert_eq!(jumps.check_named(name).unwrap().status, Status::Pass, "{name}");
    }
    let calib = jumps.checks.iter().find(|k| k.name.starts_with("calibration")).unwrap();
    assert_eq!(calib.status, Status::Pass);
    let metrics = experiments::run_metric_experiment(&c).unwrap();
    assert_eq!(metrics.check_named("identical_path_d_m2").unwrap().value, 0.0);
    assert_eq!(metrics.check_named("composition_gap").unwrap().value, 0.0);
}

#[test]
fn classification_of_shipped_fixtures() {
    let rep = experiments::run_classify(&ExperimentConfig::default()).unwrap();
    assert_eq!(rep.status, Status::Pass);
    for (f, v) in [("m1", "M1"), ("m2_only", "M2_only"), ("fails_over", "Fails_over"), ("degenerate", "Degenerate")] {
        assert_eq!(rep.labels[&format!("verdict[{f}]")], v);
    }
}

/// `I_1(pi)` by the trapezoid rule, independent of the library quadrature.
fn i1_pi_trapezoid(alpha: f64, cells: usize) -> f64 {
    let h = std::f64::consts::PI / cells as f64;
    let f = |t: f64| t.sin().abs().powf(1.0 / alpha);
    (0..cells).map(|k| 0.5 * h * (f(k as f64 * h) + f((k + 1) as f64 * h))).sum()
}

#[test]
fn constant_profile_is_linear_in_ell() {
    let alpha = 1.5;
    let i1 = i1_pi_trapezoid(alpha, 400_000);
    assert!((Psi::new(alpha).i1_pi() - i1).abs() < 1e-7, "{i1}");
    // g = 1 on both walls: I_v = I_1 and the predicted profile is ell itself
    let model = ProfileModel::new(&fixtures::m1().profile(0), alpha);
    assert!((model.iv_pi - i1).abs() < 1e-7);
    for (ell, phi) in [(0u64, 100u64), (13, 100), (50, 100), (777, 1000), (1000, 1000)] {
        assert!((model.predicted(ell, phi) - ell as f64).abs() < 1e-6 * phi as f64, "{ell}/{phi}");
    }
}

/// Integer sample with `P(phi > x) ~ x^-alpha`.
fn pareto_stats(n: usize, alpha: f64, seed: u64) -> (Vec<u64>, ReturnStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<u64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (100.0 * u.powf(-1.0 / alpha)).floor() as u64
        })
        .collect();
    let mut s = ReturnStats::default();
    for &x in &v {
        s.push(x);
    }
    (v, s)
}

#[test]
fn hill_bootstrap_covers_pareto_index() {
    let (_, s) = pareto_stats(200_000, 1.5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = s.hill(2_000);
    let (lo, hi) = experiments::hill_bootstrap(&s, 2_000, 200, &mut rng);
    assert!(lo < h && h < hi, "{lo} {h} {hi}");
    assert!(lo < 1.5 && 1.5 < hi, "{lo} {hi}");
    assert!((s.tail_slope(0.01) + 1.5).abs() < 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tail_estimators_ignore_sample_order(seed in 0u64..1000) {
        let (mut v, s) = pareto_stats(5_000, 1.5, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        v.shuffle(&mut rng);
        let mut t = ReturnStats::default();
        for &x in &v {
            t.push(x);
        }
        prop_assert_eq!(&s, &t);
        prop_assert_eq!(s.tail_slope(0.05).to_bits(), t.tail_slope(0.05).to_bits());
        prop_assert_eq!(s.hill(100).to_bits(), t.hill(100).to_bits());
    }

    #[test]
    fn merging_partial_statistics_is_order_free(seed in 0u64..1000, cuts in proptest::collection::vec(0usize..3_000, 1..6)) {
        let (v, whole) = pareto_stats(3_000, 1.5, seed);
        let mut cuts = cuts;
        cuts.push(0);
        cuts.push(v.len());
        cuts.sort_unstable();
        let mut parts: Vec<ReturnStats> = cuts
            .windows(2)
            .map(|w| {
                let mut s = ReturnStats::default();
                for &x in &v[w[0]..w[1]] {
                    s.push(x);
                }
                s
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        parts.shuffle(&mut rng);
        let mut merged = ReturnStats::default();
        for p in &parts {
            merged.merge(p);
        }
        prop_assert_eq!(merged, whole);
    }
}
