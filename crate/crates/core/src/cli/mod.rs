//! Command-line surface: `aggregate`, `train`, `evaluate`, `cv`, `predict`.
//!
//! Every command writes its outputs atomically together with a
//! `manifest.json` listing input and output hashes. Exit codes: 0 on
//! success, 2 for invalid input or configuration, 3 for runtime failures.

mod args;
mod commands;
mod config;

use std::fmt;

pub use args::{run, Cli, Command};
pub use commands::{
    cmd_aggregate, cmd_cv, cmd_evaluate, cmd_predict, cmd_train, AggregateSummary, EvaluateOptions,
    EvaluateSummary, TrainSummary,
};
pub use config::RunConfig;

use crate::dataset::DatasetError;
use crate::eval::EvalError;
use crate::labels::LabelError;
use crate::model::ModelError;
use crate::train::TrainError;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad input data, arguments or configuration.
    Validation(String),
    /// Failure while doing the work: I/O, decoding, divergence.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Labels(inner) => inner.into(),
            DatasetError::TooFewForSplit(_) | DatasetError::BadFolds { .. } | DatasetError::NoExamples => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config { .. } | ModelError::UndefinedBlocks { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(inner) => inner.into(),
            TrainError::Dataset(inner) => inner.into(),
            TrainError::Config { .. }
            | TrainError::EmptySet(_)
            | TrainError::BadIndex { .. }
            | TrainError::PreprocessingMismatch { .. }
            | TrainError::MixedVariables
            | TrainError::BadCheckpoint(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(inner) => inner.into(),
            EvalError::Model(inner) => inner.into(),
            EvalError::Dataset(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
