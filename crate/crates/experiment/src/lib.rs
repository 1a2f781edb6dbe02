//! Batch harness for the fail-over experiments: sweep configuration, paired
//! seeding, parallel execution, boxplot statistics and result files.

pub mod config;
pub mod output;
pub mod stats;
pub mod sweep;

use hrsim_core::metrics::RunMeta;
use thiserror::Error;

pub use config::{CellKey, OutputPaths, SweepConfig};
pub use stats::{summarize, CellSummary, FiveNumber};
pub use sweep::{meta_for, run_one, run_sweep, SweepResult};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run {} seed {} failed: {reason}", meta.scenario(), meta.seed)]
    Run { meta: Box<RunMeta>, reason: String },
    #[error("incomplete records: {0}")]
    Incomplete(String),
    #[error("invariant violated:\n{0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
