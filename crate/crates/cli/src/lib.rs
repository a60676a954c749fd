//! Experiment runner for the EM-C solver: configuration, distribution
//! summaries, policy grids and CSV output.

pub mod config;
pub mod grid;
pub mod output;
pub mod runner;
pub mod stats;

pub use config::{Experiment, ExperimentConfig, Overrides};
pub use runner::{run_experiment, RunReport, Sample, StatsRow, VariantReport};
pub use stats::{summarize, StatsSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Runtime(#[from] emc_core::EmcError),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running or writing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::Io(_) => 2,
        }
    }
}
