//! Scene construction and waypoint sampling for experiments.

use nalgebra::Vector3;
use rand::Rng;
use vantage_core::mapping::{make_mapping_trajectory, simulate_mapping, LandmarkMap};
use vantage_core::scene::{build_occupancy, gen_scene, position_clear, Scene};
use vantage_core::{CameraModel, OccupancyGrid};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::seeds::{scene_seed, waypoint_seed, Split};

/// One fully constructed experiment scene: geometry, occupancy, and the
/// landmark map produced by the head-height mapping pass.
pub struct SceneBundle {
    pub id: String,
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub scene: Scene,
    pub grid: OccupancyGrid,
    pub map: LandmarkMap,
    pub cam: CameraModel,
}

pub fn scene_id(split: Split, index: usize) -> String {
    format!("{split}-{index}")
}

/// Generate scene `index` of `split` and run its mapping pass.
pub fn build_bundle(cfg: &ExperimentConfig, master: u64, split: Split, index: usize) -> Result<SceneBundle> {
    let seed = scene_seed(master, split, index);
    let scene = gen_scene(&cfg.scene, seed)?;
    let grid = build_occupancy(&scene, cfg.voxel_size_m)?;
    let traj = make_mapping_trajectory(&scene, &grid, &cfg.mapping, seed)?;
    let map = simulate_mapping(&scene, &grid, &traj, &cfg.cam, &cfg.mapping, seed)?;
    Ok(SceneBundle {
        id: scene_id(split, index),
        split,
        index,
        seed,
        scene,
        grid,
        map,
        cam: cfg.cam,
    })
}

/// Rejection-sample the scene's evaluation waypoints: free-space positions
/// at robot height with the configured clearance. The walk order of the
/// returned list is the trajectory the forward policy follows.
pub fn sample_waypoints(cfg: &ExperimentConfig, bundle: &SceneBundle) -> Result<Vec<Vector3<f64>>> {
    let mut rng = vantage_core::rng::derive_rng(bundle.seed, &[vantage_core::rng::tags::WAYPOINT]);
    let b = &bundle.scene.bounds;
    let margin = cfg.waypoint_clearance_m.max(0.05);
    if b.max.x - b.min.x <= 2.0 * margin || b.max.y - b.min.y <= 2.0 * margin {
        return Err(HarnessError::Generation(format!(
            "scene {} is too small for waypoints with clearance {margin}",
            bundle.id
        )));
    }
    let mut out = Vec::with_capacity(cfg.waypoints_per_scene);
    let mut attempts = 0usize;
    let budget = cfg.waypoints_per_scene.max(1) * 10_000;
    while out.len() < cfg.waypoints_per_scene {
        attempts += 1;
        if attempts > budget {
            return Err(HarnessError::Generation(format!(
                "scene {} has no free waypoints: {} placed after {attempts} attempts",
                bundle.id,
                out.len()
            )));
        }
        let p = Vector3::new(
            rng.gen_range(b.min.x + margin..b.max.x - margin),
            rng.gen_range(b.min.y + margin..b.max.y - margin),
            cfg.robot_height_m,
        );
        if position_clear(&bundle.grid, &p, cfg.waypoint_clearance_m) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Per-waypoint seeds, index-aligned with [`sample_waypoints`]' output.
pub fn waypoint_seeds(bundle: &SceneBundle, count: usize) -> Vec<u64> {
    (0..count).map(|w| waypoint_seed(bundle.seed, w)).collect()
}
