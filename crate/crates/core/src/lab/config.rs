//! Experiment configuration. One TOML file drives every subcommand; the
//! shipped `configs/default.toml` equals [`ExperimentConfig::default`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{build_table, TableConfig, TableSpec};
use crate::observables::{fixtures, ObservableSpec};
use crate::parallel::ExecMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {path}: {reason}")]
    Field { path: String, reason: String },
}

fn field(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub shards: usize,
    pub exec: ExecMode,
    pub out: String,
    pub table: TableConfig,
    /// Depth guard: excursions reaching a wall parameter below this are
    /// censored.
    pub s_min: f64,
    /// Extra observables, usable by name next to the shipped fixtures.
    pub observables: Vec<ObservableSpec>,
    pub geometry: GeometryBlock,
    pub classify: ClassifyBlock,
    pub kac: KacBlock,
    pub tail: TailBlock,
    pub marginal: MarginalBlock,
    pub excursions: ExcursionBlock,
    pub profile: ProfileBlock,
    pub witness: WitnessBlock,
    pub jumps: JumpBlock,
    pub metrics: MetricBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryBlock {
    pub samples: usize,
    pub reversibility_tol: f64,
    pub ks_level: f64,
    pub max_discard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub fixture: String,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyBlock {
    pub grid: usize,
    pub expect: Vec<Expectation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KacBlock {
    pub returns: u64,
    pub tolerance: f64,
    pub chunks: usize,
    pub max_discard: f64,
    /// Write an excursion archive of this many leading returns (0 = none).
    pub archive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailBlock {
    pub betas: Vec<f64>,
    pub returns: u64,
    pub chunks: usize,
    pub top_fraction: f64,
    pub hill_k: Vec<u64>,
    pub bootstrap: usize,
    pub tolerance: f64,
    pub max_discard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginalBlock {
    pub fixture: String,
    /// Sample sizes; the last is the gated one, earlier ones give the trend.
    pub n_grid: Vec<usize>,
    pub replicas: usize,
    pub u_max: f64,
    pub u_points: usize,
    pub tolerance: f64,
    /// Independent replica groups per size for the trend statistic; the
    /// trend compares medians over groups.
    pub trend_seeds: usize,
    pub max_discard: f64,
}

/// Shared sweep over first returns that feeds the profile and witness
/// experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcursionBlock {
    pub fixtures: Vec<String>,
    pub returns: u64,
    pub chunks: usize,
    /// Excursions with `phi` below this are counted but not kept.
    pub min_phi: u64,
    pub max_discard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileBlock {
    pub fixtures: Vec<String>,
    /// Bin edges in `phi`; bins are `[edges[i], edges[i+1])`.
    pub bin_edges: Vec<f64>,
    pub min_deep: usize,
    /// Largest admissible fitted decay exponent.
    pub max_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WitnessBlock {
    pub overshoot: Vec<String>,
    pub controls: Vec<String>,
    pub phi_threshold: u64,
    /// Thresholds whose ratio bands must narrow in order.
    pub band_thresholds: Vec<u64>,
    pub tolerance: f64,
    pub control_max: f64,
    /// Windowed-increment curve on `W_n` paths.
    pub paths: usize,
    pub n: usize,
    pub b: f64,
    pub delta_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpBlock {
    pub fixture: String,
    pub n: usize,
    pub paths: usize,
    pub b_grid: Vec<f64>,
    pub calibration_b: f64,
    pub tolerance: f64,
    pub dispersion: [f64; 2],
    pub levy_paths: usize,
    pub levy_resolution: usize,
    pub max_discard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricBlock {
    /// Fixtures whose `d_M2(W_n, U_n)` must decrease over `n_grid`.
    pub convergent: Vec<String>,
    /// Fixtures whose `d_M2(W_n, U_n)` must stay comparable to the jump.
    pub overshoot: Vec<String>,
    pub n_grid: Vec<usize>,
    pub paths: usize,
    /// Jump size a path needs before it enters the overshoot statistic.
    pub big_jump: f64,
    /// Lower bound on the median of `d_M2 / jump` for overshoot fixtures.
    pub min_ratio: f64,
    /// Breakpoint budget handed to J1 and M1 after thinning.
    pub budget: usize,
    /// Paths per size on which J1 and M1 bounds are also computed.
    pub exact_paths: usize,
    pub max_discard: f64,
}

impl Default for GeometryBlock {
    fn default() -> Self {
        Self {
            samples: 10_000,
            reversibility_tol: 1e-9,
            ks_level: 0.01,
            max_discard: 0.01,
        }
    }
}

impl Default for ClassifyBlock {
    fn default() -> Self {
        let e = |f: &str, v: &str| Expectation {
            fixture: f.into(),
            verdict: v.into(),
        };
        Self {
            grid: 512,
            expect: vec![
                e("m1", "M1"),
                e("m2_only", "M2_only"),
                e("fails_over", "Fails_over"),
                e("degenerate", "Degenerate"),
                e("overshoot_skew", "Fails_over"),
                e("profile_skew", "M1"),
            ],
        }
    }
}

impl Default for KacBlock {
    fn default() -> Self {
        Self {
            returns: 1_000_000,
            tolerance: 0.02,
            chunks: 64,
            max_discard: 0.01,
            archive: 0,
        }
    }
}

impl Default for TailBlock {
    fn default() -> Self {
        Self {
            betas: vec![3.0, 4.0],
            returns: 1_000_000,
            chunks: 64,
            top_fraction: 0.01,
            hill_k: vec![1_000, 10_000],
            bootstrap: 200,
            tolerance: 0.1,
            max_discard: 0.01,
        }
    }
}

impl Default for MarginalBlock {
    fn default() -> Self {
        Self {
            fixture: "m1".into(),
            n_grid: vec![1_000, 10_000],
            replicas: 5_000,
            u_max: 5.0,
            u_points: 201,
            tolerance: 0.05,
            trend_seeds: 10,
            max_discard: 0.01,
        }
    }
}

impl Default for ExcursionBlock {
    fn default() -> Self {
        Self {
            fixtures: vec!["m1".into(), "m2_only".into(), "fails_over".into(), "overshoot_skew".into()],
            returns: 10_000_000,
            chunks: 64,
            min_phi: 100,
            max_discard: 0.01,
        }
    }
}

impl Default for ProfileBlock {
    fn default() -> Self {
        let e = |p: f64| 10f64.powf(p);
        Self {
            fixtures: vec!["m1".into(), "m2_only".into(), "fails_over".into(), "overshoot_skew".into()],
            bin_edges: vec![e(2.0), e(2.5), e(3.0), e(3.5), e(4.0)],
            min_deep: 100,
            max_slope: -0.05,
        }
    }
}

impl Default for WitnessBlock {
    fn default() -> Self {
        Self {
            overshoot: vec!["fails_over".into(), "overshoot_skew".into()],
            controls: vec!["m1".into(), "m2_only".into()],
            phi_threshold: 1_000,
            band_thresholds: vec![100, 1_000],
            tolerance: 0.05,
            control_max: 1.05,
            paths: 400,
            n: 10_000,
            b: 1.0,
            delta_grid: vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0],
        }
    }
}

impl Default for JumpBlock {
    fn default() -> Self {
        Self {
            fixture: "m1".into(),
            n: 10_000,
            paths: 4_000,
            b_grid: vec![0.5, 1.0, 2.0],
            calibration_b: 1.0,
            tolerance: 0.03,
            dispersion: [0.8, 1.2],
            levy_paths: 20_000,
            levy_resolution: 1_000,
            max_discard: 0.01,
        }
    }
}

impl Default for MetricBlock {
    fn default() -> Self {
        Self {
            convergent: vec!["m2_only".into()],
            overshoot: vec!["overshoot_skew".into()],
            n_grid: vec![1_000, 10_000, 100_000],
            paths: 100,
            big_jump: 0.5,
            min_ratio: 0.1,
            budget: 1_000,
            exact_paths: 8,
            max_discard: 0.01,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_241_014,
            shards: 8,
            exec: ExecMode::Parallel,
            out: "out".into(),
            table: TableConfig::drop(3.0, 1.0, 2.0),
            s_min: crate::dynamics::DEFAULT_S_MIN,
            observables: Vec::new(),
            geometry: GeometryBlock::default(),
            classify: ClassifyBlock::default(),
            kac: KacBlock::default(),
            tail: TailBlock::default(),
            marginal: MarginalBlock::default(),
            excursions: ExcursionBlock::default(),
            profile: ProfileBlock::default(),
            witness: WitnessBlock::default(),
            jumps: JumpBlock::default(),
            metrics: MetricBlock::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded. Execution settings
    /// (shards, mode, output directory) do not change results and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.shards = 1;
        c.exec = ExecMode::Sequential;
        c.out = String::new();
        let canon = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(canon))
    }

    pub fn table_spec(&self) -> Result<TableSpec, ConfigError> {
        build_table(&self.table).map_err(|e| field("table", e.to_string()))
    }

    /// Table with the cusp exponent replaced.
    pub fn table_for_beta(&self, beta: f64) -> Result<TableSpec, ConfigError> {
        let mut t = self.table.clone();
        t.beta = beta;
        for c in &mut t.cusps {
            c.beta = beta;
        }
        build_table(&t).map_err(|e| field("tail.betas", e.to_string()))
    }

    /// Shipped fixture or configured observable by name.
    pub fn observable(&self, name: &str) -> Option<ObservableSpec> {
        self.observables
            .iter()
            .find(|o| o.name == name)
            .cloned()
            .or_else(|| fixtures::by_name(name))
    }

    fn resolve(&self, path: &str, name: &str) -> Result<(), ConfigError> {
        self.observable(name)
            .map(|_| ())
            .ok_or_else(|| field(path, format!("unknown observable `{name}`")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let table = self.table_spec()?;
        if self.shards == 0 {
            return Err(field("shards", "must be at least 1"));
        }
        if !(self.s_min > 0.0) {
            return Err(field("s_min", "must be positive"));
        }
        for (i, o) in self.observables.iter().enumerate() {
            o.validate(&table)
                .map_err(|e| field(&format!("observables[{i}]"), e.to_string()))?;
        }
        for (i, e) in self.classify.expect.iter().enumerate() {
            self.resolve(&format!("classify.expect[{i}].fixture"), &e.fixture)?;
            if crate::observables::Verdict::from_name(&e.verdict).is_none() {
                return Err(field(
                    &format!("classify.expect[{i}].verdict"),
                    format!("unknown verdict `{}`", e.verdict),
                ));
            }
        }
        if self.classify.grid < 64 {
            return Err(field("classify.grid", "must be at least 64"));
        }
        positive_u("kac.returns", self.kac.returns)?;
        positive_usize("kac.chunks", self.kac.chunks)?;
        unit("kac.tolerance", self.kac.tolerance)?;
        unit("kac.max_discard", self.kac.max_discard)?;
        if self.tail.betas.is_empty() {
            return Err(field("tail.betas", "empty"));
        }
        for b in &self.tail.betas {
            if !(*b > 2.0) {
                return Err(field("tail.betas", format!("beta = {b} must exceed 2")));
            }
        }
        positive_u("tail.returns", self.tail.returns)?;
        positive_usize("tail.chunks", self.tail.chunks)?;
        unit("tail.top_fraction", self.tail.top_fraction)?;
        unit("tail.max_discard", self.tail.max_discard)?;
        for k in &self.tail.hill_k {
            if *k == 0 || *k >= self.tail.returns {
                return Err(field("tail.hill_k", format!("k = {k} outside (0, returns)")));
            }
        }
        self.resolve("marginal.fixture", &self.marginal.fixture)?;
        if self.marginal.n_grid.is_empty() || self.marginal.n_grid.contains(&0) {
            return Err(field("marginal.n_grid", "needs positive sizes"));
        }
        positive_usize("marginal.replicas", self.marginal.replicas)?;
        positive_usize("marginal.trend_seeds", self.marginal.trend_seeds)?;
        if self.marginal.u_points < 2 {
            return Err(field("marginal.u_points", "at least 2"));
        }
        for (i, f) in self.excursions.fixtures.iter().enumerate() {
            self.resolve(&format!("excursions.fixtures[{i}]"), f)?;
        }
        positive_u("excursions.returns", self.excursions.returns)?;
        positive_usize("excursions.chunks", self.excursions.chunks)?;
        let registered = |path: &str, names: &[String]| -> Result<(), ConfigError> {
            for (i, f) in names.iter().enumerate() {
                if !self.excursions.fixtures.contains(f) {
                    return Err(field(
                        &format!("{path}[{i}]"),
                        format!("`{f}` is not in excursions.fixtures"),
                    ));
                }
            }
            Ok(())
        };
        registered("profile.fixtures", &self.profile.fixtures)?;
        registered("witness.overshoot", &self.witness.overshoot)?;
        registered("witness.controls", &self.witness.controls)?;
        let edges = &self.profile.bin_edges;
        if edges.len() < 3 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field("profile.bin_edges", "need at least 3 increasing edges"));
        }
        if edges[0] < self.excursions.min_phi as f64 {
            return Err(field("profile.bin_edges", "first edge below excursions.min_phi"));
        }
        if self.witness.band_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field("witness.band_thresholds", "must increase"));
        }
        if self.witness.band_thresholds.first().copied().unwrap_or(0) < self.excursions.min_phi
            || self.witness.phi_threshold < self.excursions.min_phi
        {
            return Err(field("witness", "thresholds below excursions.min_phi"));
        }
        if self.witness.delta_grid.iter().any(|d| !(*d > 0.0)) {
            return Err(field("witness.delta_grid", "must be positive"));
        }
        positive_usize("witness.n", self.witness.n)?;
        self.resolve("jumps.fixture", &self.jumps.fixture)?;
        positive_usize("jumps.n", self.jumps.n)?;
        positive_usize("jumps.paths", self.jumps.paths)?;
        if !self.jumps.b_grid.contains(&self.jumps.calibration_b) {
            return Err(field("jumps.calibration_b", "must be one of jumps.b_grid"));
        }
        if self.jumps.b_grid.iter().any(|b| !(*b > 0.0)) {
            return Err(field("jumps.b_grid", "must be positive"));
        }
        if self.jumps.levy_resolution < 2 {
            return Err(field("jumps.levy_resolution", "at least 2"));
        }
        for (i, f) in self.metrics.convergent.iter().chain(&self.metrics.overshoot).enumerate() {
            self.resolve(&format!("metrics.fixtures[{i}]"), f)?;
        }
        if self.metrics.n_grid.len() < 2 {
            return Err(field("metrics.n_grid", "need at least two sizes"));
        }
        positive_usize("metrics.paths", self.metrics.paths)?;
        positive_usize("metrics.budget", self.metrics.budget)?;
        Ok(())
    }
}

fn positive_u(path: &str, v: u64) -> Result<(), ConfigError> {
    if v == 0 {
        return Err(field(path, "must be positive"));
    }
    Ok(())
}

fn positive_usize(path: &str, v: usize) -> Result<(), ConfigError> {
    positive_u(path, v as u64)
}

fn unit(path: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(field(path, format!("{v} outside (0, 1)")));
    }
    Ok(())
}
