//! Experiment reports: JSON with a versioned schema plus CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    /// Process exit code for this outcome.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
        }
    }

    /// Worst of two outcomes.
    pub fn and(self, other: Status) -> Status {
        self.max(other)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Inconclusive => "inconclusive",
            Status::Fail => "fail",
        })
    }
}

/// One gated statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable condition, e.g. `<= 0.05`.
    pub condition: String,
    pub status: Status,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self::flag(name, value, format!("<= {bound}"), value <= bound)
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self::flag(name, value, format!(">= {bound}"), value >= bound)
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self::flag(
            name,
            value,
            format!("within {tol} of {target}"),
            (value - target).abs() <= tol,
        )
    }

    pub fn in_range(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self::flag(name, value, format!("in [{lo}, {hi}]"), value >= lo && value <= hi)
    }

    pub fn flag(name: &str, value: f64, condition: String, ok: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            condition,
            status: if ok && value.is_finite() { Status::Pass } else { Status::Fail },
        }
    }

    pub fn inconclusive(name: &str, value: f64, condition: String) -> Self {
        Self {
            name: name.to_string(),
            value,
            condition,
            status: Status::Inconclusive,
        }
    }
}

/// Column-named numeric table, written as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I: IntoIterator<Item = S>, S: ToString>(&mut self, row: I) {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub discard: f64,
    pub censoring: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: Status,
    pub rates: Rates,
    pub checks: Vec<Check>,
    pub values: BTreeMap<String, f64>,
    pub labels: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub tables: BTreeMap<String, Table>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            status: Status::Pass,
            rates: Rates::default(),
            checks: Vec::new(),
            values: BTreeMap::new(),
            labels: BTreeMap::new(),
            tables: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.status = self.status.and(c.status);
        self.checks.push(c);
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }

    pub fn label(&mut self, key: &str, v: impl ToString) {
        self.labels.insert(key.to_string(), v.to_string());
    }

    pub fn table(&mut self, key: &str, t: Table) {
        self.tables.insert(key.to_string(), t);
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    /// Records rates and gates them against `max_discard`.
    pub fn gate_rates(&mut self, rates: Rates, max_discard: f64) {
        self.rates = rates;
        self.check(Check::at_most("discard_rate", rates.discard, max_discard));
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<id>.json` and one `<id>_<table>.csv` per table.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.json", self.experiment)), self.to_json())?;
        for (k, t) in &self.tables {
            fs::write(dir.join(format!("{}_{}.csv", self.experiment, k)), t.to_csv())?;
        }
        Ok(())
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let mut s = format!("{} [{}]\n", self.experiment, self.status);
        for c in &self.checks {
            s.push_str(&format!("  {:<40} {:>14.6e}  {}  {}\n", c.name, c.value, c.condition, c.status));
        }
        s
    }
}

/// Several reports under one status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub status: Status,
    pub experiments: Vec<ExperimentReport>,
}

impl CombinedReport {
    pub fn new(config_hash: &str, seed: u64, experiments: Vec<ExperimentReport>) -> Self {
        let status = experiments.iter().fold(Status::Pass, |s, r| s.and(r.status));
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            seed,
            status,
            experiments,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Median of a slice (upper median for even lengths); NaN when empty.
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Empirical quantile by the nearest-rank rule.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[k]
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
