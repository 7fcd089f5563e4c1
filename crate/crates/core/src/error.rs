//! Error type shared by the core crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Rejection sampling or another randomized construction ran out of
    /// retries.
    #[error("generation failed: {0}")]
    Generation(String),

    /// A query referenced a point outside the occupancy grid.
    #[error("point {0:?} is outside the occupancy grid")]
    OutOfBounds([f64; 3]),

    /// Geometry too degenerate to produce a meaningful answer
    /// (zero-length axis, landmark at the camera center, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Serialization or deserialization failed.
    #[error("serialization: {0}")]
    Serialization(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Serialization(e.to_string())
    }
}
