//! Learned viewpoint scorers: a minimal reverse-mode differentiation tape,
//! a two-layer rectifier network over aggregate features, a per-landmark
//! token transformer, their shared training loop, and a versioned
//! parameter file format.
//!
//! Everything is deterministic given the seeds: initialization, data
//! splits, batch order, and the serialized artifacts.

pub mod error;
pub mod graph;
pub mod mlp;
pub mod store;
pub mod train;
pub mod vpt;

pub use error::LearnError;
pub use graph::{Gradients, Graph, Value, VarId};
pub use mlp::{mlp_forward, MlpParams};
pub use store::{ParamStore, StoreMeta};
pub use train::{train, Arch, Dataset, DatasetExample, OptimKind, TrainConfig, TrainReport, TrainedParams};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use vpt::{tokens_from_features, vpt_forward, TokenBatch, VptConfig, VptParams};

/// Result alias used throughout the learn crate.
pub type Result<T> = std::result::Result<T, LearnError>;
