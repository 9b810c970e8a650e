use std::fmt::Display;

use thiserror::Error;

/// A failed command, carrying the process exit status it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// The environment could not be loaded or failed mid-run (exit 3).
    #[error("environment error: {0}")]
    Environment(String),
    /// Input data failed validation (exit 4).
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Environment(_) => 3,
            CliError::Validation(_) => 4,
        }
    }

    pub fn config(e: impl Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn environment(e: impl Display) -> Self {
        CliError::Environment(e.to_string())
    }
}

impl From<ragtune::Error> for CliError {
    fn from(e: ragtune::Error) -> Self {
        use ragtune::Error::*;
        match e {
            InvalidSpace(_)
            | InvalidConfig(_)
            | InvalidRewardParams(_)
            | RecallTooLarge { .. }
            | RecallZero
            | BatchTooLarge { .. }
            | InvalidRun(_)
            | UnknownSweepKey(_)
            | InvalidSweepValue { .. }
            | SpaceMismatch => CliError::Config(e.to_string()),
            _ => CliError::Environment(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
