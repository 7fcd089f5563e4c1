//! Core geometry, synthetic indoor scenes, mapping simulation, and a
//! PnP-based localization oracle for benchmarking viewpoint-selection
//! policies.
//!
//! The world frame is Z-up. Cameras follow the usual computer-vision
//! convention: +Z forward, +X right, +Y down. A [`geom::Pose`] is always
//! camera-to-world.

pub mod error;
pub mod features;
pub mod geom;
pub mod mapping;
pub mod oracle;
pub mod rng;
pub mod scene;

pub use error::CoreError;
pub use geom::{CameraModel, Pose, ViewpointCandidate};
pub use scene::{OccupancyGrid, Scene};

/// Result alias used throughout the core crate.
pub type Result<T> = std::result::Result<T, CoreError>;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
