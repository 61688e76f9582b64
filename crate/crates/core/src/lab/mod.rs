//! Experiment orchestration: configuration, the experiments, and reports.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, ExperimentConfig};
pub use experiments::LabError;
pub use report::{CombinedReport, ExperimentReport, Status};
