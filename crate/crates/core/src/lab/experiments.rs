//! The experiments. Each builds an [`ExperimentReport`]; replica work goes
//! through [`map_replicas`] on streams keyed by experiment tag and chunk.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use super::report::{median, ols_slope, quantile, Check, CombinedReport, ExperimentReport, Rates, Table};
use crate::dynamics::{sample_mu, Billiard, DynamicsError, PhasePoint};
use crate::geometry::TableSpec;
use crate::inducing::{
    first_return, record_orbit, region_x, sample_mu_x, simulate_returns, walk_excursion, ArchiveRecord,
    ExcursionError, OrbitRecord, RegionX, ReturnSequence, ReturnStats,
};
use crate::observables::{
    ell_star, excursion_profile_residual, make_mean_zero, multi_cusp_curves, IvCurve, Observable,
    ObservableSpec, ProfileModel, Psi, Verdict,
};
use crate::parallel::{map_replicas, StreamFactory};
use crate::skorohod::{
    composition_gap, d_j1_with_budget, d_m1_bounds_with_budget, d_m2, decompose_u_r, induced_path,
    jump_functionals, partial_sums, path_w_n, thin_to_budget, windowed_increment_sup, CadlagPath, PathError,
};
use crate::stable::{
    cdf, cf, empirical_cf, ks_against, ks_p_value, levy_exceedance, max_cf_gap, sigma_from_profile,
    LevyJumpModel, StableError, StableParams,
};

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("observable `{0}`: {1}")]
    Observable(String, String),
    #[error("observable `{0}` is degenerate (I_v(pi) = 0); no stable limit to compare against")]
    Degenerate(String),
    #[error(transparent)]
    Stable(#[from] StableError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Fewest selected excursions or paths a gated median is computed from.
pub const MIN_SELECTED: usize = 10;

/// Tolerance of the pointwise identity `W_n = U_n + R_n`.
pub const IDENTITY_TOL: f64 = 1e-12;

struct System {
    table: TableSpec,
    region: RegionX,
    s_min: f64,
    alpha: f64,
}

impl System {
    fn new(table: TableSpec, s_min: f64) -> Self {
        let region = region_x(&table);
        let beta = table.beta();
        Self {
            table,
            region,
            s_min,
            alpha: beta / (beta - 1.0),
        }
    }

    fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        Ok(Self::new(cfg.table_spec()?, cfg.s_min))
    }

    fn billiard(&self) -> Billiard<'_> {
        Billiard::with_s_min(&self.table, self.s_min)
    }
}

/// A mean-zero observable, sign-normalized so that `I_v(pi) >= 0`.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub name: String,
    pub spec: ObservableSpec,
    /// Curve of the normalized observable at the first cusp of maximal
    /// flatness.
    pub curve: IvCurve,
    pub verdict: Verdict,
    pub flipped: bool,
}

pub fn prepare(cfg: &ExperimentConfig, table: &TableSpec, name: &str) -> Result<Prepared, LabError> {
    let raw = cfg
        .observable(name)
        .ok_or_else(|| LabError::Observable(name.into(), "unknown observable".into()))?;
    let mut spec = make_mean_zero(&raw, table).map_err(|e| LabError::Observable(name.into(), e.to_string()))?;
    let curves = multi_cusp_curves(&spec, table, cfg.classify.grid);
    let mut curve = curves.curves[0].1.clone();
    let flipped = curve.iv_pi < 0.0;
    if flipped {
        spec = spec.scaled(-1.0);
        curve = multi_cusp_curves(&spec, table, cfg.classify.grid).curves[0].1.clone();
    }
    Ok(Prepared {
        name: name.to_string(),
        spec,
        curve,
        verdict: curves.overall,
        flipped,
    })
}

fn bind<'t>(p: &Prepared, table: &'t TableSpec) -> Result<Observable<'t>, LabError> {
    Observable::new(&p.spec, table).map_err(|e| LabError::Observable(p.name.clone(), e.to_string()))
}

fn chunk_len(total: u64, chunks: usize, c: usize) -> u64 {
    let t = total as u128;
    let k = chunks as u128;
    let c = c as u128;
    (t * (c + 1) / k - t * c / k) as u64
}

/// Outcome counts of independent starts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Attempts {
    pub ok: u64,
    pub censored: u64,
    pub discarded: u64,
}

impl Attempts {
    pub fn merge(&mut self, o: &Attempts) {
        self.ok += o.ok;
        self.censored += o.censored;
        self.discarded += o.discarded;
    }

    pub fn rates(&self) -> Rates {
        let t = (self.ok + self.censored + self.discarded).max(1) as f64;
        Rates {
            discard: self.discarded as f64 / t,
            censoring: self.censored as f64 / t,
        }
    }

    fn failure(&mut self, depth: bool) {
        if depth {
            self.censored += 1;
        } else {
            self.discarded += 1;
        }
    }
}

fn stats_rates(s: &ReturnStats) -> Rates {
    Rates {
        discard: s.discard_rate(),
        censoring: s.censoring_rate(),
    }
}

/// Orbit of length `n` from a `mu_X` start; failed starts are redrawn.
fn orbit_from_mu_x<R: Rng + ?Sized>(
    sys: &System,
    billiard: &Billiard<'_>,
    n: usize,
    observables: &[Observable<'_>],
    rng: &mut R,
    attempts: &mut Attempts,
) -> OrbitRecord {
    loop {
        let x = sample_mu_x(&sys.table, &sys.region, rng);
        match record_orbit(billiard, &sys.region, x, n, observables) {
            Ok(o) => {
                attempts.ok += 1;
                return o;
            }
            Err(e) => attempts.failure(e.is_deep()),
        }
    }
}

/// `sum_{j<n} v(T^j x)` from the stepper.
fn birkhoff_sum(billiard: &Billiard<'_>, obs: &Observable<'_>, x: PhasePoint, n: usize) -> Result<f64, DynamicsError> {
    let mut st = billiard.state(x)?;
    let mut acc = 0.0;
    for j in 0..n {
        acc += obs.at_state(&st);
        if j + 1 < n {
            st = billiard.step(&st)?.0;
        }
    }
    Ok(acc)
}

// ---------- decomposition ----------

/// Worst errors of `W_n = U_n + R_n` and `U_n = W~_n o g_n` over orbits.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DecompositionTally {
    pub orbits: u64,
    pub identity: f64,
    pub composition: f64,
}

impl DecompositionTally {
    pub fn merge(&mut self, o: &DecompositionTally) {
        self.orbits += o.orbits;
        self.identity = self.identity.max(o.identity);
        self.composition = self.composition.max(o.composition);
    }

    pub fn gate(&self, rep: &mut ExperimentReport) {
        rep.value("decomposition_orbits", self.orbits as f64);
        rep.check(Check::at_most("decomposition_identity", self.identity, IDENTITY_TOL));
        rep.check(Check::at_most("composition_gap", self.composition, 0.0));
    }
}

/// `W_n`, `U_n` and `R_n` of one orbit, with the decomposition errors.
pub struct OrbitPaths {
    pub w: CadlagPath,
    pub u: CadlagPath,
    pub r: CadlagPath,
    pub identity: f64,
    pub composition: f64,
}

pub fn orbit_paths(values: &[f64], returns: &[u64], n: usize, alpha: f64) -> Result<OrbitPaths, PathError> {
    let w = path_w_n(&partial_sums(&values[..n]), n, alpha)?;
    let (u, r) = decompose_u_r(values, returns, n, alpha)?;
    let identity = w
        .values()
        .iter()
        .zip(u.values().iter().zip(r.values()))
        .map(|(a, (b, c))| (a - (b + c)).abs())
        .fold(0.0, f64::max);
    // v_phi o f^j over completed excursions; the induced path past N_n / n
    // is never read, so the tail is padded
    let mut sums = Vec::with_capacity(n);
    let mut prev = 0usize;
    for &ret in returns {
        let ret = ret as usize;
        if ret > n {
            break;
        }
        let mut s = 0.0;
        for v in &values[prev..ret] {
            s += v;
        }
        sums.push(s);
        prev = ret;
    }
    sums.resize(n.max(sums.len()), 0.0);
    let w_tilde = induced_path(&sums, n, alpha)?;
    let mut gaps = Vec::with_capacity(returns.len());
    let mut last = 0;
    for &ret in returns {
        gaps.push(ret - last);
        last = ret;
    }
    let seq = ReturnSequence::from_return_times(&gaps).map_err(|e| PathError::Returns(e.to_string()))?;
    let composition = composition_gap(&u, &w_tilde, &seq, n)?;
    Ok(OrbitPaths {
        w,
        u,
        r,
        identity,
        composition,
    })
}

// ---------- geometry ----------

struct TablePart {
    reversibility: f64,
    r: Vec<f64>,
    cos: Vec<f64>,
    discarded: u64,
}

fn wrapped(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// `R T R T = id` and invariance of the marginals of `mu` under `T`.
pub fn run_table_check(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let table = cfg.table_spec()?;
    let g = &cfg.geometry;
    let mut rep = ExperimentReport::new("table_check", &cfg.hash(), cfg.seed);
    let valid = table.validate(256);
    rep.check(Check::flag(
        "boundary_valid",
        if valid.is_ok() { 1.0 } else { 0.0 },
        "== 1".into(),
        valid.is_ok(),
    ));
    if let Err(e) = valid {
        rep.note(e.to_string());
        return Ok(rep);
    }
    let length = table.total_length;
    let factory = StreamFactory::new(cfg.seed, "table_check");
    let chunks = 16;
    let parts = map_replicas(cfg.exec, cfg.shards, chunks, |c| {
        let billiard = Billiard::with_s_min(&table, cfg.s_min);
        let mut rng = factory.stream(c as u64);
        let mut part = TablePart {
            reversibility: 0.0,
            r: Vec::new(),
            cos: Vec::new(),
            discarded: 0,
        };
        for _ in 0..chunk_len(g.samples as u64, chunks, c) {
            let x = sample_mu(&table, &mut rng);
            let Ok(y) = billiard.billiard_map(x) else {
                part.discarded += 1;
                continue;
            };
            let Ok(z) = billiard.billiard_map(y.reversed()) else {
                part.discarded += 1;
                continue;
            };
            let back = z.reversed();
            let err = wrapped(back.r, x.r, length).max((back.theta - x.theta).abs());
            part.reversibility = part.reversibility.max(err);
            part.r.push(y.r / length);
            part.cos.push(0.5 * (1.0 - y.theta.cos()));
        }
        part
    });
    let mut rev: f64 = 0.0;
    let (mut r, mut cos, mut discarded) = (Vec::new(), Vec::new(), 0u64);
    for p in parts {
        rev = rev.max(p.reversibility);
        r.extend(p.r);
        cos.extend(p.cos);
        discarded += p.discarded;
    }
    let kept = r.len();
    let uniform = |u: f64| u.clamp(0.0, 1.0);
    let d_r = ks_against(&r, uniform);
    let d_cos = ks_against(&cos, uniform);
    rep.value("samples", kept as f64);
    rep.value("ks_distance_r", d_r);
    rep.value("ks_distance_cos_theta", d_cos);
    rep.value("boundary_length", length);
    rep.check(Check::at_most("reversibility_max_error", rev, g.reversibility_tol));
    rep.check(Check::at_least("ks_p_value_r", ks_p_value(d_r, kept), g.ks_level));
    rep.check(Check::at_least("ks_p_value_cos_theta", ks_p_value(d_cos, kept), g.ks_level));
    let total = (kept as u64 + discarded).max(1) as f64;
    rep.gate_rates(
        Rates {
            discard: discarded as f64 / total,
            censoring: 0.0,
        },
        g.max_discard,
    );
    Ok(rep)
}

// ---------- classification ----------

pub fn run_classify(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let table = cfg.table_spec()?;
    let mut rep = ExperimentReport::new("classify", &cfg.hash(), cfg.seed);
    let mut t = Table::new(&[
        "fixture",
        "expected",
        "verdict",
        "iv_pi",
        "iv_star",
        "iv_min",
        "s_star",
        "overshoot_ratio",
    ]);
    for e in &cfg.classify.expect {
        let spec = cfg
            .observable(&e.fixture)
            .ok_or_else(|| LabError::Observable(e.fixture.clone(), "unknown observable".into()))?;
        let curves = multi_cusp_curves(&spec, &table, cfg.classify.grid);
        let c = &curves.curves[0].1;
        let verdict = curves.overall;
        rep.label(&format!("verdict[{}]", e.fixture), verdict);
        rep.check(Check::flag(
            &format!("verdict[{}]", e.fixture),
            c.iv_pi,
            format!("verdict == {}", e.verdict),
            verdict.to_string() == e.verdict,
        ));
        t.push([
            e.fixture.clone(),
            e.verdict.clone(),
            verdict.to_string(),
            format!("{:e}", c.iv_pi),
            format!("{:e}", c.iv_star),
            format!("{:e}", c.iv_min),
            format!("{:e}", c.s_star),
            format!("{:e}", c.overshoot_ratio()),
        ]);
    }
    rep.table("verdicts", t);
    Ok(rep)
}

/// `I_v` curves of the named observables (all classification fixtures when
/// `names` is empty).
pub fn run_iv_curves(cfg: &ExperimentConfig, names: &[String]) -> Result<ExperimentReport, LabError> {
    let table = cfg.table_spec()?;
    let mut rep = ExperimentReport::new("iv_curve", &cfg.hash(), cfg.seed);
    let names: Vec<String> = if names.is_empty() {
        cfg.classify.expect.iter().map(|e| e.fixture.clone()).collect()
    } else {
        names.to_vec()
    };
    for name in &names {
        let spec = cfg
            .observable(name)
            .ok_or_else(|| LabError::Observable(name.clone(), "unknown observable".into()))?;
        let curves = multi_cusp_curves(&spec, &table, cfg.classify.grid);
        for (cusp, c) in &curves.curves {
            let key = if curves.curves.len() == 1 {
                name.clone()
            } else {
                format!("{name}_cusp{cusp}")
            };
            let mut t = Table::new(&["s", "iv"]);
            for (s, v) in c.grid.iter().zip(&c.values) {
                t.push([format!("{s:.17e}"), format!("{v:.17e}")]);
            }
            rep.value(&format!("iv_pi[{key}]"), c.iv_pi);
            rep.value(&format!("overshoot_ratio[{key}]"), c.overshoot_ratio());
            rep.label(&format!("verdict[{key}]"), c.verdict);
            rep.table(&key, t);
        }
    }
    Ok(rep)
}

// ---------- returns ----------

fn sharded_returns(cfg: &ExperimentConfig, sys: &System, total: u64, chunks: usize, factory: &StreamFactory) -> ReturnStats {
    let parts = map_replicas(cfg.exec, cfg.shards, chunks, |c| {
        let billiard = sys.billiard();
        let mut rng = factory.stream(c as u64);
        simulate_returns(&billiard, &sys.region, chunk_len(total, chunks, c), &mut rng)
    });
    let mut stats = ReturnStats::default();
    for p in &parts {
        stats.merge(p);
    }
    stats
}

fn log_grid(max: u64) -> Vec<u64> {
    let mut g = Vec::new();
    let mut d = 1u64;
    while d <= max {
        for m in [1, 2, 5] {
            if m * d <= max {
                g.push(m * d);
            }
        }
        d *= 10;
    }
    g
}

/// Kac identity `E_X[phi] = 1 / mu(X)`.
pub fn run_kac(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let sys = System::from_config(cfg)?;
    let k = &cfg.kac;
    let mut rep = ExperimentReport::new("kac", &cfg.hash(), cfg.seed);
    let stats = sharded_returns(cfg, &sys, k.returns, k.chunks, &StreamFactory::new(cfg.seed, "kac"));
    let mean = stats.mean();
    let target = 1.0 / sys.region.measure;
    rep.value("returns", stats.len() as f64);
    rep.value("mean_return_time", mean);
    rep.value("inverse_measure", target);
    rep.value("measure_x", sys.region.measure);
    rep.check(Check::at_most("kac_relative_error", (mean / target - 1.0).abs(), k.tolerance));
    rep.gate_rates(stats_rates(&stats), k.max_discard);
    let max = stats.counts.keys().next_back().copied().unwrap_or(1);
    let mut t = Table::new(&["n", "survival"]);
    for (n, p) in stats.survival(&log_grid(max)) {
        t.push([n.to_string(), format!("{p:e}")]);
    }
    rep.table("survival", t);
    Ok(rep)
}

/// The first `kac.archive` excursions of a dedicated stream, with angles.
pub fn excursion_archive(cfg: &ExperimentConfig) -> Result<Vec<ArchiveRecord>, LabError> {
    let sys = System::from_config(cfg)?;
    let billiard = sys.billiard();
    let mut rng = StreamFactory::new(cfg.seed, "kac_archive").stream(0);
    let mut out = Vec::with_capacity(cfg.kac.archive);
    while out.len() < cfg.kac.archive {
        let x = sample_mu_x(&sys.table, &sys.region, &mut rng);
        match first_return(&billiard, &sys.region, x, &[]) {
            Ok(e) => out.push(ArchiveRecord {
                phi: e.phi,
                min_depth: e.min_depth,
                censored: false,
                thetas: Some(e.collisions.iter().map(|c| c.theta).collect()),
            }),
            Err(e @ ExcursionError::Dynamics { min_depth, .. }) if e.is_deep() => out.push(ArchiveRecord {
                phi: e.progress(),
                min_depth,
                censored: true,
                thetas: None,
            }),
            Err(_) => {}
        }
    }
    Ok(out)
}

/// Percentile interval of the Hill estimate under the multinomial
/// bootstrap. Only the top of the sample matters: the number of resampled
/// values from the top `pool` is binomial, and those values are uniform
/// draws from the pool.
pub fn hill_bootstrap<R: Rng + ?Sized>(stats: &ReturnStats, k: u64, resamples: usize, rng: &mut R) -> (f64, f64) {
    let total = stats.len() + stats.censored_len();
    let pool_size = (4 * k).min(total);
    let pool: Vec<f64> = stats.top(pool_size).iter().map(|&v| v as f64).collect();
    let binom = Binomial::new(total, pool_size as f64 / total as f64).expect("valid binomial");
    let mut est = Vec::with_capacity(resamples);
    let mut draw = Vec::new();
    for _ in 0..resamples {
        let m = binom.sample(rng) as usize;
        if m <= k as usize {
            continue;
        }
        draw.clear();
        draw.extend((0..m).map(|_| pool[rng.random_range(0..pool.len())]));
        draw.sort_by(|a, b| b.total_cmp(a));
        est.push(crate::inducing::hill_sorted(&draw, k as usize));
    }
    (quantile(&est, 0.025), quantile(&est, 0.975))
}

/// Fractions at which the tail slope is also reported, ungated.
pub const TAIL_DIAGNOSTIC_FRACTIONS: [f64; 4] = [0.001, 0.003, 0.01, 0.1];

/// Tail index of `phi` per cusp exponent.
pub fn run_tail_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let tb = &cfg.tail;
    let mut rep = ExperimentReport::new("tail", &cfg.hash(), cfg.seed);
    let mut worst = Rates::default();
    let mut t = Table::new(&["beta", "alpha", "slope", "k", "hill", "ci_lo", "ci_hi"]);
    let root = StreamFactory::new(cfg.seed, "tail");
    for &beta in &tb.betas {
        let sys = System::new(cfg.table_for_beta(beta)?, cfg.s_min);
        let factory = root.child(&format!("beta={beta}"));
        let stats = sharded_returns(cfg, &sys, tb.returns, tb.chunks, &factory);
        let alpha = sys.alpha;
        let slope = stats.tail_slope(tb.top_fraction);
        rep.value(&format!("alpha[beta={beta}]"), alpha);
        rep.value(&format!("tail_slope[beta={beta}]"), slope);
        rep.check(Check::within(&format!("tail_slope[beta={beta}]"), slope, -alpha, tb.tolerance));
        for f in TAIL_DIAGNOSTIC_FRACTIONS {
            rep.value(&format!("tail_slope[beta={beta},fraction={f}]"), stats.tail_slope(f));
        }
        let mut boot = factory.child("bootstrap").stream(0);
        for &k in &tb.hill_k {
            let h = stats.hill(k);
            let (lo, hi) = hill_bootstrap(&stats, k, tb.bootstrap, &mut boot);
            rep.value(&format!("hill[beta={beta},k={k}]"), h);
            rep.value(&format!("hill_ci_lo[beta={beta},k={k}]"), lo);
            rep.value(&format!("hill_ci_hi[beta={beta},k={k}]"), hi);
            t.push([
                beta.to_string(),
                format!("{alpha:e}"),
                format!("{slope:e}"),
                k.to_string(),
                format!("{h:e}"),
                format!("{lo:e}"),
                format!("{hi:e}"),
            ]);
        }
        let rates = stats_rates(&stats);
        rep.check(Check::at_most(&format!("discard_rate[beta={beta}]"), rates.discard, tb.max_discard));
        worst.discard = worst.discard.max(rates.discard);
        worst.censoring = worst.censoring.max(rates.censoring);
    }
    rep.rates = worst;
    rep.table("estimates", t);
    Ok(rep)
}

// ---------- stable marginal ----------

/// Stable parameters predicted for a prepared observable.
pub fn predicted_params(p: &Prepared, table: &TableSpec) -> Result<StableParams, LabError> {
    let beta = table.beta();
    let alpha = beta / (beta - 1.0);
    let s = sigma_from_profile(p.curve.iv_pi, alpha, beta, table.total_length)?;
    Ok(StableParams::new(alpha, s)?)
}

/// `W_n(1)` replicas from `mu` starts.
fn marginal_samples(
    cfg: &ExperimentConfig,
    sys: &System,
    obs: &Observable<'_>,
    n: usize,
    replicas: usize,
    factory: &StreamFactory,
) -> (Vec<f64>, Attempts) {
    let scale = (n as f64).powf(-1.0 / sys.alpha);
    let out = map_replicas(cfg.exec, cfg.shards, replicas, |r| {
        let billiard = sys.billiard();
        let mut rng = factory.stream(r as u64);
        let mut att = Attempts::default();
        loop {
            let x = sample_mu(&sys.table, &mut rng);
            match birkhoff_sum(&billiard, obs, x, n) {
                Ok(s) => {
                    att.ok += 1;
                    return (scale * s, att);
                }
                Err(e) => att.failure(matches!(e, DynamicsError::CuspDepthOverflow { .. })),
            }
        }
    });
    let mut att = Attempts::default();
    let samples = out
        .into_iter()
        .map(|(s, a)| {
            att.merge(&a);
            s
        })
        .collect();
    (samples, att)
}

pub fn run_marginal_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let m = &cfg.marginal;
    let sys = System::from_config(cfg)?;
    let prep = prepare(cfg, &sys.table, &m.fixture)?;
    if prep.verdict == Verdict::Degenerate || !(prep.curve.iv_pi > 0.0) {
        return Err(LabError::Degenerate(prep.name));
    }
    let params = predicted_params(&prep, &sys.table)?;
    let obs = bind(&prep, &sys.table)?;
    let mut rep = ExperimentReport::new("marginal", &cfg.hash(), cfg.seed);
    rep.label("fixture", &prep.name);
    rep.label("sign", if prep.flipped { "-1" } else { "+1" });
    rep.value("alpha", params.alpha);
    rep.value("sigma_alpha", params.sigma_alpha);
    rep.value("iv_pi", prep.curve.iv_pi);
    let root = StreamFactory::new(cfg.seed, "marginal");
    let mut attempts = Attempts::default();
    let mut gaps_table = Table::new(&["n", "group", "cf_gap"]);
    let mut medians = Vec::new();
    let mut gated = (0usize, f64::NAN, Vec::new());
    for &n in &m.n_grid {
        let mut gaps = Vec::new();
        for g in 0..m.trend_seeds {
            let factory = root.child(&format!("n={n}/group={g}"));
            let (samples, att) = marginal_samples(cfg, &sys, &obs, n, m.replicas, &factory);
            attempts.merge(&att);
            let gap = max_cf_gap(&samples, &params, m.u_max, m.u_points);
            gaps_table.push([n.to_string(), g.to_string(), format!("{gap:e}")]);
            gaps.push(gap);
            if g == 0 {
                gated = (n, gap, samples);
            }
        }
        let med = median(&gaps);
        rep.value(&format!("cf_gap_median[n={n}]"), med);
        medians.push(med);
    }
    let (n, gap, samples) = gated;
    rep.check(Check::at_most(&format!("cf_gap[n={n}]"), gap, m.tolerance));
    if medians.len() >= 2 {
        let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
        rep.check(Check::flag(
            "cf_gap_trend",
            medians[medians.len() - 1] - medians[0],
            "median gaps strictly decrease along n_grid".into(),
            decreasing,
        ));
    }
    // effective scale from |phi(1)| = exp(-sigma^alpha)
    let phi1 = empirical_cf(&samples, 1.0).norm();
    rep.value("effective_sigma_alpha", -phi1.ln());
    let ks = ks_against(&samples, |x| cdf(&params, x).unwrap_or(f64::NAN));
    rep.value("ks_distance", ks);
    let mut t = Table::new(&["u", "empirical_re", "empirical_im", "stable_re", "stable_im"]);
    for k in 0..m.u_points {
        let u = -m.u_max + 2.0 * m.u_max * k as f64 / (m.u_points - 1) as f64;
        let e = empirical_cf(&samples, u);
        let c = cf(&params, u);
        t.push([u, e.re, e.im, c.re, c.im].map(|v| format!("{v:e}")));
    }
    rep.table("cf", t);
    rep.table("gaps", gaps_table);
    rep.gate_rates(attempts.rates(), m.max_discard);
    Ok(rep)
}

// ---------- excursion sweep: profile and witness ----------

/// Statistics of one excursion with `phi >= min_phi`, per registered
/// fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepExcursion {
    pub phi: u64,
    /// Sup-distance from the predicted profile over `phi`.
    pub residual: Vec<f64>,
    /// `v_{ell*} / v_phi`.
    pub ratio: Vec<f64>,
    /// `max_l v_l / v_phi`.
    pub sup_ratio: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ExcursionSweep {
    pub fixtures: Vec<String>,
    /// `I_v* / I_v(pi)` per fixture.
    pub targets: Vec<f64>,
    pub stats: ReturnStats,
    pub deep: Vec<DeepExcursion>,
}

impl ExcursionSweep {
    fn index(&self, name: &str) -> usize {
        self.fixtures.iter().position(|f| f == name).expect("registered fixture")
    }

    fn column(&self, i: usize, min_phi: u64, pick: impl Fn(&DeepExcursion) -> &Vec<f64>) -> Vec<f64> {
        self.deep.iter().filter(|d| d.phi >= min_phi).map(|d| pick(d)[i]).collect()
    }
}

/// First returns from `mu_X` with partial sums of every registered fixture.
pub fn excursion_sweep(cfg: &ExperimentConfig) -> Result<ExcursionSweep, LabError> {
    let e = &cfg.excursions;
    let sys = System::from_config(cfg)?;
    let preps: Vec<Prepared> = e
        .fixtures
        .iter()
        .map(|f| prepare(cfg, &sys.table, f))
        .collect::<Result<_, _>>()?;
    let obs: Vec<Observable<'_>> = preps.iter().map(|p| bind(p, &sys.table)).collect::<Result<_, _>>()?;
    let models: Vec<ProfileModel> = preps
        .iter()
        .map(|p| ProfileModel::new(&p.spec.profile(0), sys.alpha))
        .collect();
    let psi = Psi::new(sys.alpha);
    let psis: Vec<f64> = preps.iter().map(|p| psi.psi(p.curve.normalized_s_star())).collect();
    let factory = StreamFactory::new(cfg.seed, "excursions");
    let parts = map_replicas(cfg.exec, cfg.shards, e.chunks, |c| {
        let billiard = sys.billiard();
        let mut rng = factory.stream(c as u64);
        let mut stats = ReturnStats::default();
        let mut deep = Vec::new();
        let mut sums: Vec<Vec<f64>> = vec![Vec::new(); obs.len()];
        for _ in 0..chunk_len(e.returns, e.chunks, c) {
            let x = sample_mu_x(&sys.table, &sys.region, &mut rng);
            let Ok(start) = billiard.state(x) else {
                stats.discards.other += 1;
                continue;
            };
            for s in sums.iter_mut() {
                s.clear();
                s.push(0.0);
            }
            let walked = walk_excursion(&billiard, &sys.region, &start, |st| {
                for (acc, o) in sums.iter_mut().zip(&obs) {
                    let last = acc[acc.len() - 1];
                    acc.push(last + o.at_state(st));
                }
            });
            match walked {
                Ok((phi, _, _)) => {
                    stats.push(phi);
                    if phi >= e.min_phi {
                        let mut d = DeepExcursion {
                            phi,
                            residual: Vec::with_capacity(obs.len()),
                            ratio: Vec::with_capacity(obs.len()),
                            sup_ratio: Vec::with_capacity(obs.len()),
                        };
                        for (i, s) in sums.iter().enumerate() {
                            let total = s[phi as usize];
                            d.residual.push(excursion_profile_residual(s, &models[i]).normalized);
                            d.ratio.push(s[ell_star(phi, psis[i]) as usize] / total);
                            d.sup_ratio.push(s.iter().copied().fold(f64::NEG_INFINITY, f64::max) / total);
                        }
                        deep.push(d);
                    }
                }
                Err(err) => stats.record_failure(&err),
            }
        }
        (stats, deep)
    });
    let mut stats = ReturnStats::default();
    let mut deep = Vec::new();
    for (s, d) in parts {
        stats.merge(&s);
        deep.extend(d);
    }
    Ok(ExcursionSweep {
        fixtures: e.fixtures.clone(),
        targets: preps.iter().map(|p| p.curve.overshoot_ratio()).collect(),
        stats,
        deep,
    })
}

/// Binned residuals of the excursion profile law.
pub fn profile_report(cfg: &ExperimentConfig, sweep: &ExcursionSweep) -> ExperimentReport {
    let pb = &cfg.profile;
    let mut rep = ExperimentReport::new("profile", &cfg.hash(), cfg.seed);
    rep.gate_rates(stats_rates(&sweep.stats), cfg.excursions.max_discard);
    let deep = sweep.deep.len();
    rep.value("returns", sweep.stats.len() as f64);
    if deep < pb.min_deep {
        rep.check(Check::inconclusive("deep_excursions", deep as f64, format!(">= {}", pb.min_deep)));
    } else {
        rep.check(Check::at_least("deep_excursions", deep as f64, pb.min_deep as f64));
    }
    let mut t = Table::new(&["fixture", "bin_lo", "bin_hi", "count", "median_phi", "median_residual"]);
    let edges = &pb.bin_edges;
    for f in &pb.fixtures {
        let i = sweep.index(f);
        let mut meds = Vec::new();
        let mut phis = Vec::new();
        let mut empty = false;
        for w in edges.windows(2) {
            let sel: Vec<&DeepExcursion> = sweep
                .deep
                .iter()
                .filter(|d| (d.phi as f64) >= w[0] && (d.phi as f64) < w[1])
                .collect();
            let res: Vec<f64> = sel.iter().map(|d| d.residual[i]).collect();
            let ph: Vec<f64> = sel.iter().map(|d| d.phi as f64).collect();
            let (mr, mp) = (median(&res), median(&ph));
            empty |= sel.is_empty();
            t.push([
                f.clone(),
                format!("{:e}", w[0]),
                format!("{:e}", w[1]),
                sel.len().to_string(),
                format!("{mp:e}"),
                format!("{mr:e}"),
            ]);
            meds.push(mr);
            phis.push(mp);
        }
        let worst_step = meds.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max);
        if empty {
            let cond = "every bin populated".to_string();
            rep.check(Check::inconclusive(&format!("profile_monotone[{f}]"), worst_step, cond.clone()));
            rep.check(Check::inconclusive(&format!("profile_decay_slope[{f}]"), f64::NAN, cond));
            continue;
        }
        rep.check(Check::flag(
            &format!("profile_monotone[{f}]"),
            worst_step,
            "< 1 (bin medians strictly decrease)".into(),
            worst_step < 1.0,
        ));
        let lx: Vec<f64> = phis.iter().map(|p| p.ln()).collect();
        let ly: Vec<f64> = meds.iter().map(|m| m.ln()).collect();
        rep.check(Check::at_most(
            &format!("profile_decay_slope[{f}]"),
            ols_slope(&lx, &ly),
            pb.max_slope,
        ));
    }
    rep.table("bins", t);
    rep
}

/// Windowed-increment and jump exceedance frequencies on `W_n` and `U_n`.
#[derive(Clone, Debug, Default)]
pub struct WindowCurve {
    /// `(fixture, delta, P(windowed sup > b), P(max U_n jump > b))`.
    pub rows: Vec<(String, f64, f64, f64)>,
    pub attempts: Attempts,
    pub tally: DecompositionTally,
}

pub fn witness_window_curve(cfg: &ExperimentConfig) -> Result<WindowCurve, LabError> {
    let wb = &cfg.witness;
    let sys = System::from_config(cfg)?;
    let names: Vec<&String> = wb.overshoot.iter().chain(&wb.controls).collect();
    let preps: Vec<Prepared> = names
        .iter()
        .map(|f| prepare(cfg, &sys.table, f))
        .collect::<Result<_, _>>()?;
    let obs: Vec<Observable<'_>> = preps.iter().map(|p| bind(p, &sys.table)).collect::<Result<_, _>>()?;
    let factory = StreamFactory::new(cfg.seed, "witness_window");
    let per_path = map_replicas(cfg.exec, cfg.shards, wb.paths, |p| -> Result<_, PathError> {
        let billiard = sys.billiard();
        let mut rng = factory.stream(p as u64);
        let mut att = Attempts::default();
        let orbit = orbit_from_mu_x(&sys, &billiard, wb.n, &obs, &mut rng, &mut att);
        let mut tally = DecompositionTally::default();
        let mut hits = Vec::with_capacity(obs.len());
        for vals in &orbit.values {
            let paths = orbit_paths(vals, &orbit.returns, wb.n, sys.alpha)?;
            tally.merge(&DecompositionTally {
                orbits: 1,
                identity: paths.identity,
                composition: paths.composition,
            });
            let window: Vec<bool> = wb
                .delta_grid
                .iter()
                .map(|&d| windowed_increment_sup(&paths.w, d, wb.b).exceeds)
                .collect();
            hits.push((window, jump_functionals(&paths.u, wb.b).exceeds));
        }
        Ok((hits, att, tally))
    });
    let mut curve = WindowCurve::default();
    let mut window = vec![vec![0usize; wb.delta_grid.len()]; obs.len()];
    let mut jump = vec![0usize; obs.len()];
    for r in per_path {
        let (hits, att, tally) = r?;
        curve.attempts.merge(&att);
        curve.tally.merge(&tally);
        for (i, (w, j)) in hits.into_iter().enumerate() {
            for (k, hit) in w.into_iter().enumerate() {
                window[i][k] += hit as usize;
            }
            jump[i] += j as usize;
        }
    }
    let np = wb.paths as f64;
    for (i, name) in names.iter().enumerate() {
        for (k, &d) in wb.delta_grid.iter().enumerate() {
            curve
                .rows
                .push(((*name).clone(), d, window[i][k] as f64 / np, jump[i] as f64 / np));
        }
    }
    Ok(curve)
}

fn iqr(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}

/// Mid-excursion ratio against `I_v* / I_v(pi)`, plus the window curve.
pub fn witness_report(cfg: &ExperimentConfig, sweep: &ExcursionSweep, curve: &WindowCurve) -> ExperimentReport {
    let wb = &cfg.witness;
    let mut rep = ExperimentReport::new("m2_witness", &cfg.hash(), cfg.seed);
    let mut rates = stats_rates(&sweep.stats);
    let wr = curve.attempts.rates();
    rates.discard = rates.discard.max(wr.discard);
    rates.censoring = rates.censoring.max(wr.censoring);
    rep.gate_rates(rates, cfg.excursions.max_discard);
    let mut bands = Table::new(&["fixture", "phi_threshold", "count", "median_ratio", "iqr"]);
    for f in &wb.overshoot {
        let i = sweep.index(f);
        let target = sweep.targets[i];
        rep.value(&format!("target_ratio[{f}]"), target);
        let sel = sweep.column(i, wb.phi_threshold, |d| &d.ratio);
        rep.value(&format!("selected[{f}]"), sel.len() as f64);
        let med = median(&sel);
        rep.value(&format!("median_ratio[{f}]"), med);
        let rel = (med / target - 1.0).abs();
        let name = format!("ratio_relative_error[{f}]");
        if sel.len() < MIN_SELECTED {
            rep.check(Check::inconclusive(&name, rel, format!("needs {MIN_SELECTED} excursions")));
        } else {
            rep.check(Check::at_most(&name, rel, wb.tolerance));
        }
        let mut widths = Vec::new();
        let mut thin = false;
        for &thr in &wb.band_thresholds {
            let s = sweep.column(i, thr, |d| &d.ratio);
            thin |= s.len() < MIN_SELECTED;
            let w = iqr(&s);
            bands.push([
                f.clone(),
                thr.to_string(),
                s.len().to_string(),
                format!("{:e}", median(&s)),
                format!("{w:e}"),
            ]);
            widths.push(w);
        }
        let shrink = widths.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max);
        let name = format!("band_narrowing[{f}]");
        if thin {
            rep.check(Check::inconclusive(&name, shrink, format!("needs {MIN_SELECTED} excursions per threshold")));
        } else {
            rep.check(Check::flag(&name, shrink, "< 1 (IQR shrinks)".into(), shrink < 1.0));
        }
    }
    for f in &wb.controls {
        let i = sweep.index(f);
        let sel = sweep.column(i, wb.phi_threshold, |d| &d.ratio);
        let sup = sweep.column(i, wb.phi_threshold, |d| &d.sup_ratio);
        rep.value(&format!("median_sup_ratio[{f}]"), median(&sup));
        let name = format!("control_ratio[{f}]");
        let med = median(&sel);
        if sel.len() < MIN_SELECTED {
            rep.check(Check::inconclusive(&name, med, format!("needs {MIN_SELECTED} excursions")));
        } else {
            rep.check(Check::at_most(&name, med, wb.control_max));
        }
    }
    let mut t = Table::new(&["fixture", "delta", "p_window", "p_jump"]);
    for (f, d, pw, pj) in &curve.rows {
        t.push([f.clone(), format!("{d:e}"), format!("{pw:e}"), format!("{pj:e}")]);
    }
    rep.table("bands", bands);
    rep.table("window_curve", t);
    curve.tally.gate(&mut rep);
    rep
}

pub fn run_profile_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    Ok(profile_report(cfg, &excursion_sweep(cfg)?))
}

pub fn run_m2_witness_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let sweep = excursion_sweep(cfg)?;
    let curve = witness_window_curve(cfg)?;
    Ok(witness_report(cfg, &sweep, &curve))
}

// ---------- jumps ----------

pub fn run_jump_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let jb = &cfg.jumps;
    let sys = System::from_config(cfg)?;
    let prep = prepare(cfg, &sys.table, &jb.fixture)?;
    if prep.verdict == Verdict::Degenerate || !(prep.curve.iv_pi > 0.0) {
        return Err(LabError::Degenerate(prep.name));
    }
    let params = predicted_params(&prep, &sys.table)?;
    let obs = [bind(&prep, &sys.table)?];
    let factory = StreamFactory::new(cfg.seed, "jumps");
    let per_path = map_replicas(cfg.exec, cfg.shards, jb.paths, |p| -> Result<_, PathError> {
        let billiard = sys.billiard();
        let mut rng = factory.stream(p as u64);
        let mut att = Attempts::default();
        let orbit = orbit_from_mu_x(&sys, &billiard, jb.n, &obs, &mut rng, &mut att);
        let paths = orbit_paths(&orbit.values[0], &orbit.returns, jb.n, sys.alpha)?;
        let counts: Vec<usize> = jb.b_grid.iter().map(|&b| jump_functionals(&paths.u, b).count).collect();
        let tally = DecompositionTally {
            orbits: 1,
            identity: paths.identity,
            composition: paths.composition,
        };
        Ok((counts, att, tally))
    });
    let mut att = Attempts::default();
    let mut tally = DecompositionTally::default();
    let mut counts = vec![Vec::with_capacity(jb.paths); jb.b_grid.len()];
    for r in per_path {
        let (c, a, t) = r?;
        att.merge(&a);
        tally.merge(&t);
        for (k, v) in c.into_iter().enumerate() {
            counts[k].push(v as f64);
        }
    }
    let np = jb.paths as f64;
    let exceed: Vec<f64> = counts
        .iter()
        .map(|c| c.iter().filter(|&&v| v > 0.0).count() as f64 / np)
        .collect();
    let kc = jb.b_grid.iter().position(|&b| b == jb.calibration_b).expect("validated");
    let mut rep = ExperimentReport::new("jumps", &cfg.hash(), cfg.seed);
    rep.label("fixture", &prep.name);
    let calibrated = match LevyJumpModel::calibrated(sys.alpha, jb.calibration_b, exceed[kc]) {
        Ok(m) => m,
        Err(e) => {
            rep.check(Check::inconclusive(
                "calibration",
                exceed[kc],
                format!("exceedance at b = {} must lie in (0, 1): {e}", jb.calibration_b),
            ));
            rep.gate_rates(att.rates(), jb.max_discard);
            return Ok(rep);
        }
    };
    let theory = LevyJumpModel::from_params(&params);
    // the same calibration on simulated Lévy paths with the predicted law
    let levy_chunks = 64.min(jb.levy_paths.max(1));
    let levy_factory = StreamFactory::new(cfg.seed, "jumps_levy");
    let levy_hits: Vec<f64> = map_replicas(cfg.exec, cfg.shards, levy_chunks, |c| {
        let mut rng = levy_factory.stream(c as u64);
        let m = chunk_len(jb.levy_paths as u64, levy_chunks, c) as usize;
        levy_exceedance(&params, jb.levy_resolution, m, &[jb.calibration_b], &mut rng)[0].1 * m as f64
    });
    let p_levy = levy_hits.iter().map(|h| h.round()).sum::<f64>() / jb.levy_paths as f64;
    rep.value("c_calibrated", calibrated.c);
    rep.value("c_theory", theory.c);
    rep.value("sigma_alpha", params.sigma_alpha);
    match LevyJumpModel::calibrated(sys.alpha, jb.calibration_b, p_levy) {
        Ok(m) => rep.value("c_levy_paths", m.c),
        Err(_) => rep.value("c_levy_paths", f64::NAN),
    }
    let mut t = Table::new(&[
        "b",
        "p_exceed",
        "p_calibrated",
        "p_theory",
        "mean_count",
        "var_count",
        "dispersion",
    ]);
    for (k, &b) in jb.b_grid.iter().enumerate() {
        let pred = calibrated.exceedance_probability(b)?;
        let p_th = theory.exceedance_probability(b)?;
        let c = &counts[k];
        let mean = c.iter().sum::<f64>() / np;
        let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (np - 1.0).max(1.0);
        let disp = var / mean;
        if k == kc {
            rep.check(Check::at_most(&format!("calibration_point[b={b}]"), (exceed[k] - pred).abs(), 1e-12));
        } else {
            rep.check(Check::within(&format!("exceedance[b={b}]"), exceed[k], pred, jb.tolerance));
        }
        let name = format!("dispersion[b={b}]");
        if mean > 0.0 {
            rep.check(Check::in_range(&name, disp, jb.dispersion[0], jb.dispersion[1]));
        } else {
            rep.check(Check::inconclusive(&name, f64::NAN, "needs at least one jump".into()));
        }
        t.push([b, exceed[k], pred, p_th, mean, var, disp].map(|v| format!("{v:e}")));
    }
    rep.table("exceedance", t);
    tally.gate(&mut rep);
    rep.gate_rates(att.rates(), jb.max_discard);
    Ok(rep)
}

// ---------- metrics ----------

#[derive(Clone, Debug, Default)]
struct MetricSample {
    m2: f64,
    jump: f64,
    exact: Option<(f64, f64, f64, f64)>,
}

pub fn run_metric_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, LabError> {
    let mb = &cfg.metrics;
    let sys = System::from_config(cfg)?;
    let mut rep = ExperimentReport::new("metrics", &cfg.hash(), cfg.seed);
    let mut att = Attempts::default();
    let mut tally = DecompositionTally::default();
    let mut t = Table::new(&[
        "fixture",
        "n",
        "median_d_m2",
        "big_jump_paths",
        "median_ratio",
        "median_d_j1",
        "median_m1_lower",
        "median_m1_upper",
        "max_thinning_error",
    ]);
    let root = StreamFactory::new(cfg.seed, "metrics");
    let mut sanity: f64 = 0.0;
    let fixtures: Vec<(&String, bool)> = mb
        .convergent
        .iter()
        .map(|f| (f, false))
        .chain(mb.overshoot.iter().map(|f| (f, true)))
        .collect();
    for (f, overshoot) in fixtures {
        let prep = prepare(cfg, &sys.table, f)?;
        let obs = [bind(&prep, &sys.table)?];
        let mut medians = Vec::new();
        for &n in &mb.n_grid {
            let factory = root.child(&format!("{f}/n={n}"));
            let per_path = map_replicas(cfg.exec, cfg.shards, mb.paths, |p| -> Result<_, PathError> {
                let billiard = sys.billiard();
                let mut rng = factory.stream(p as u64);
                let mut a = Attempts::default();
                let orbit = orbit_from_mu_x(&sys, &billiard, n, &obs, &mut rng, &mut a);
                let paths = orbit_paths(&orbit.values[0], &orbit.returns, n, sys.alpha)?;
                let m2 = d_m2(&paths.w, &paths.u)?;
                let jump = jump_functionals(&paths.u, mb.big_jump).max_jump;
                let exact = if p < mb.exact_paths {
                    let (wt, ew) = thin_to_budget(&paths.w, mb.budget, 1e-9);
                    let (ut, eu) = thin_to_budget(&paths.u, mb.budget, 1e-9);
                    let j1 = d_j1_with_budget(&wt, &ut, mb.budget)?;
                    let m1 = d_m1_bounds_with_budget(&wt, &ut, mb.budget)?;
                    Some((j1, m1.lower, m1.upper, ew + eu))
                } else {
                    None
                };
                let sanity = if p == 0 { d_m2(&paths.u, &paths.u)? } else { 0.0 };
                let tl = DecompositionTally {
                    orbits: 1,
                    identity: paths.identity,
                    composition: paths.composition,
                };
                Ok((MetricSample { m2, jump, exact }, a, tl, sanity))
            });
            let mut samples = Vec::with_capacity(mb.paths);
            for r in per_path {
                let (s, a, tl, z) = r?;
                att.merge(&a);
                tally.merge(&tl);
                sanity = sanity.max(z);
                samples.push(s);
            }
            let m2: Vec<f64> = samples.iter().map(|s| s.m2).collect();
            let ratios: Vec<f64> = samples
                .iter()
                .filter(|s| s.jump >= mb.big_jump)
                .map(|s| s.m2 / s.jump)
                .collect();
            let ex: Vec<(f64, f64, f64, f64)> = samples.iter().filter_map(|s| s.exact).collect();
            let col = |k: usize| -> Vec<f64> {
                ex.iter()
                    .map(|e| [e.0, e.1, e.2, e.3][k])
                    .collect()
            };
            let thin_err = col(3).into_iter().fold(0.0, f64::max);
            let med = median(&m2);
            let med_ratio = median(&ratios);
            medians.push(med);
            rep.value(&format!("median_d_m2[{f},n={n}]"), med);
            rep.value(&format!("max_thinning_error[{f},n={n}]"), thin_err);
            t.push([
                f.clone(),
                n.to_string(),
                format!("{med:e}"),
                ratios.len().to_string(),
                format!("{med_ratio:e}"),
                format!("{:e}", median(&col(0))),
                format!("{:e}", median(&col(1))),
                format!("{:e}", median(&col(2))),
                format!("{thin_err:e}"),
            ]);
            if overshoot {
                let name = format!("m2_jump_ratio[{f},n={n}]");
                if ratios.len() < MIN_SELECTED {
                    rep.check(Check::inconclusive(
                        &name,
                        med_ratio,
                        format!("needs {MIN_SELECTED} paths with a jump >= {}", mb.big_jump),
                    ));
                } else {
                    rep.check(Check::at_least(&name, med_ratio, mb.min_ratio));
                }
            }
        }
        if !overshoot {
            let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
            rep.check(Check::flag(
                &format!("m2_trend[{f}]"),
                medians[medians.len() - 1] / medians[0],
                "median d_M2 strictly decreases along n_grid".into(),
                decreasing,
            ));
        }
    }
    rep.check(Check::at_most("identical_path_d_m2", sanity, 0.0));
    rep.table("distances", t);
    tally.gate(&mut rep);
    rep.gate_rates(att.rates(), mb.max_discard);
    Ok(rep)
}

// ---------- everything ----------

/// All experiments under one status; the excursion sweep is shared by the
/// profile and witness reports.
pub fn run_report(cfg: &ExperimentConfig) -> Result<CombinedReport, LabError> {
    let mut reports = vec![
        run_table_check(cfg)?,
        run_classify(cfg)?,
        run_kac(cfg)?,
        run_tail_experiment(cfg)?,
        run_marginal_experiment(cfg)?,
    ];
    let sweep = excursion_sweep(cfg)?;
    reports.push(profile_report(cfg, &sweep));
    let curve = witness_window_curve(cfg)?;
    reports.push(witness_report(cfg, &sweep, &curve));
    reports.push(run_jump_experiment(cfg)?);
    reports.push(run_metric_experiment(cfg)?);
    Ok(CombinedReport::new(&cfg.hash(), cfg.seed, reports))
}
