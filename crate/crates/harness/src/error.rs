//! Harness error type and the process exit codes the CLI maps it to.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// A configuration problem: unreadable/invalid config files, invalid
    /// parameter combinations, unknown formats. CLI exit code 2.
    #[error("config error: {0}")]
    InvalidConfig(String),
    /// A runtime failure while generating, training, or evaluating.
    /// CLI exit code 3.
    #[error("generation error: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] vantage_core::CoreError),
    #[error(transparent)]
    Learn(#[from] vantage_learn::LearnError),
    #[error(transparent)]
    Policy(#[from] vantage_policy::PolicyError),
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::InvalidConfig(format!("invalid JSON: {e}"))
    }
}

impl HarnessError {
    /// Process exit code for the CLI: 2 for config/usage problems, 3 for
    /// everything that failed while doing the work.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvalidConfig(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
