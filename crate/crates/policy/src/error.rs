use thiserror::Error;

/// Errors produced by policy scoring and selection.
#[derive(Debug, Error)]
pub enum PolicyError {
    /// A selection was requested over zero candidates.
    #[error("empty candidate list")]
    EmptyCandidates,

    /// The policy was called without an input its definition requires
    /// (forward policy without a next waypoint, random policy without a
    /// seed, learned policy without a model, ...).
    #[error("usage: {0}")]
    Usage(String),

    /// Geometry too degenerate to score (landmark at zero depth, zero
    /// direction vector, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A model was paired with features it was not trained on.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A parameter is out of range (non-positive pixel sigma, ...).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A policy produced a non-finite score for some candidate.
    #[error("policy produced a non-finite score for candidate index {0}")]
    NonFiniteScore(usize),

    #[error(transparent)]
    Core(#[from] vantage_core::CoreError),

    #[error(transparent)]
    Learn(#[from] vantage_learn::LearnError),
}
