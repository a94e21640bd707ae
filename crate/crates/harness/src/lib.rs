//! Monte Carlo runner, rate fitting, envelope audits and the output surface
//! behind the `plsgd` binary.

pub mod audit;
pub mod config;
pub mod experiment;
pub mod instance;
pub mod output;
pub mod stats;
pub mod verify;

use thiserror::Error;

pub use config::{ExperimentConfig, K0Spec, ProblemSpec, StepSpec};
pub use experiment::{run_experiment, ExperimentSummary};
pub use instance::Instance;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("failed to parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Problem(#[from] plsgd_core::ProblemError),
    #[error(transparent)]
    Theory(#[from] plsgd_core::TheoryError),
    #[error(transparent)]
    Engine(#[from] plsgd_core::EngineError),
    #[error("trial {trial} diverged: {source}")]
    TrialFailed { trial: u64, source: plsgd_core::EngineError },
    #[error("{failed} of {trials} trials diverged (first: trial {first})")]
    TooManyDiverged { failed: usize, trials: usize, first: u64 },
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error("i/o failure on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }
}
