//! Experiment harness for the viewpoint-selection benchmark: dataset
//! generation, model training, paired policy evaluation, and reporting,
//! plus the `vantage` command line that drives them.
//!
//! Everything derives from one master seed. Scenes, mapping passes,
//! waypoints, candidate sweeps, oracle noise, class balancing, and model
//! initialization each consume their own derived stream, so stages can be
//! re-run independently and whole pipelines reproduce byte-identically.

pub mod balance;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod gen;
pub mod manifest;
pub mod report;
pub mod seeds;
pub mod training;
pub mod world;

pub use cli::{run, Cli};
pub use config::{default_policies, default_thresholds, ExperimentConfig, ThresholdPair};
pub use error::{HarnessError, Result};
pub use evaluate::{evaluate, EvalReport, PolicyEval};
pub use gen::{gen_split, load_split};
pub use report::{render, ReportFormat};
pub use seeds::Split;
pub use training::{build_corpus, train_arch};
pub use world::{build_bundle, sample_waypoints, SceneBundle};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
