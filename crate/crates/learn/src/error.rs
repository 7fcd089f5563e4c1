//! Error type for model construction, training, and serialization.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    /// Input dimensions do not match the model's feature schema.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A usage error in graph construction (e.g. non-scalar loss).
    #[error("graph usage error: {0}")]
    Usage(String),

    /// Training cannot proceed (single-class data, empty dataset, ...).
    #[error("training error: {0}")]
    Training(String),

    /// A parameter file is malformed or inconsistent.
    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("config error: {0}")]
    InvalidConfig(String),

    #[error("i/o error")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for LearnError {
    fn from(e: serde_json::Error) -> Self {
        LearnError::Serialization(e.to_string())
    }
}
