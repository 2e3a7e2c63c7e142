//! Dataset loading, experiment configuration and the end-to-end pipelines
//! behind the `fedfhe` binary.

pub mod bench;
pub mod config;
pub mod data;
pub mod experiment;
pub mod report;

use std::fmt;

pub use config::{ExperimentConfig, Mode, ModelKind, Overrides};
pub use data::{load_dataset, Dataset, Schema};
pub use experiment::{run_experiment, ExperimentOutput, TrainedModel};
pub use report::{MetricsReport, REPORT_SCHEMA};

/// Pipeline stage an error came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Psi,
    Preprocess,
    Train,
    Evaluate,
    Inference,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Psi => "psi",
            Phase::Preprocess => "preprocess",
            Phase::Train => "train",
            Phase::Evaluate => "evaluate",
            Phase::Inference => "inference",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("report: {0}")]
    Report(String),
    #[error("{phase} phase: {source}")]
    Phase {
        phase: Phase,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tags a module error with the phase it came from.
pub trait InPhase<T> {
    fn in_phase(self, phase: Phase) -> Result<T>;
}

impl<T, E: std::error::Error + Send + Sync + 'static> InPhase<T> for std::result::Result<T, E> {
    fn in_phase(self, phase: Phase) -> Result<T> {
        self.map_err(|e| CliError::Phase { phase, source: Box::new(e) })
    }
}
