//! Viewpoint-selection policies over a landmark map: count heuristics,
//! Fisher-information scoring, trained scorers, and the oracle-backed
//! best-possible sweep used as an evaluation ceiling.
//!
//! All policies are stateless evaluators: score every candidate
//! orientation at a position, pick the argmax, break ties toward the
//! lowest candidate index.

pub mod best;
pub mod error;
pub mod kinds;
pub mod learned;
pub mod score;
pub mod select;

#[cfg(test)]
pub(crate) mod testworld;

pub use best::{best_possible, candidate_oracle_rng, BestPossible};
pub use error::PolicyError;
pub use kinds::{Policy, PolicyKind, Scalarization, ScoredCandidate};
pub use learned::{score_features, score_learned};
pub use score::{fim_single, scalarize, score_angle, score_fim, score_max, LOG_DET_DAMPING};
pub use select::{argmax, score_candidates, select, SelectContext};

/// Result alias used throughout the policy crate.
pub type Result<T> = std::result::Result<T, PolicyError>;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
