//! Experiment runner: configs, paired Monte Carlo runs, Bayes regret,
//! sweeps, named recipes and result files.

pub mod config;
pub mod output;
pub mod recipes;
pub mod run;
pub mod stats;
pub mod sweep;

use thiserror::Error;

pub use config::{ExperimentConfig, ModelSource, Overrides};
pub use output::{emit_outputs, emit_sweep};
pub use recipes::{recipe, RECIPES};
pub use run::{run_experiment, ExperimentResult, PolicyRun, RunResult};
pub use stats::{bayes_regret, RegretBand};
pub use sweep::{sweep, SweepTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
}

impl HarnessError {
    /// Process exit code: 2 for config problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) | HarnessError::Io { .. } => 3,
        }
    }
}
