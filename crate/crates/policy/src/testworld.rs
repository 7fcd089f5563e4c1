//! Shared fixtures for the crate's tests: a procedurally generated world
//! with a mapped landmark set, hand-built bare maps for analytic cases,
//! and randomly initialized model stores.

use nalgebra::Vector3;
use rand::Rng;
use vantage_core::features::{aggregate_schema, token_dim, token_schema, AggregateShape, NormRanges};
use vantage_core::geom::sample_viewpoints;
use vantage_core::mapping::{
    make_mapping_trajectory, simulate_mapping, LandmarkMap, LandmarkObsStats, MappedLandmark,
    MappingConfig,
};
use vantage_core::rng::derive_rng;
use vantage_core::scene::{build_occupancy, gen_scene, position_clear, visible, SceneConfig};
use vantage_core::{CameraModel, OccupancyGrid, Scene, ViewpointCandidate};
use vantage_learn::{
    Arch, MlpParams, ParamStore, TrainConfig, TrainedParams, VptConfig, VptParams,
};

pub struct World {
    pub scene: Scene,
    pub grid: OccupancyGrid,
    pub map: LandmarkMap,
    pub cam: CameraModel,
}

/// A compact generated room with occluders, mapped at head height.
pub fn small_world(seed: u64, map_noise: f64) -> World {
    let scfg = SceneConfig {
        room_size: [6.0, 6.0, 2.5],
        landmark_count: 130,
        wall_occluder_count: 2,
        low_occluder_count: 5,
        ..SceneConfig::default()
    };
    let scene = gen_scene(&scfg, seed).unwrap();
    let grid = build_occupancy(&scene, 0.08).unwrap();
    let cam = CameraModel::default();
    let mcfg = MappingConfig {
        waypoint_count: 30,
        map_noise_sigma_m: map_noise,
        voxel_size_m: 0.08,
        ..MappingConfig::default()
    };
    let traj = make_mapping_trajectory(&scene, &grid, &mcfg, seed ^ 1).unwrap();
    let map = simulate_mapping(&scene, &grid, &traj, &cam, &mcfg, seed ^ 2).unwrap();
    World { scene, grid, map, cam }
}

/// A robot-height position with free space around it and at least one
/// level heading from which ten or more mapped landmarks are visible, so
/// localization sweeps from here are not doomed by clutter.
pub fn free_position(world: &World, seed: u64) -> Vector3<f64> {
    let mut rng = derive_rng(seed, &[0x46524545]);
    let b = &world.scene.bounds;
    for _ in 0..10_000 {
        let p = Vector3::new(
            rng.gen_range(b.min.x + 0.5..b.max.x - 0.5),
            rng.gen_range(b.min.y + 0.5..b.max.y - 0.5),
            0.5,
        );
        if !position_clear(&world.grid, &p, 0.25) {
            continue;
        }
        let rich = sample_viewpoints(&p, 12, 0.0, 0.0, rng.gen())
            .unwrap()
            .iter()
            .any(|c| {
                world
                    .map
                    .landmarks
                    .iter()
                    .filter(|l| {
                        world
                            .scene
                            .landmark_position(l.id)
                            .is_some_and(|t| visible(&world.grid, &c.pose, &world.cam, &t))
                    })
                    .count()
                    >= 10
            });
        if rich {
            return p;
        }
    }
    panic!("no clear position found");
}

pub fn candidates_at(position: &Vector3<f64>, n: usize, seed: u64) -> Vec<ViewpointCandidate> {
    sample_viewpoints(position, n, -10.0, 45.0, seed).unwrap()
}

/// Map with the given landmark positions and deliberately permissive
/// observation statistics (full cone, wide distance window), so a bare
/// landmark counts as in-range whenever it is visible.
pub fn bare_map(cam: &CameraModel, positions: &[Vector3<f64>]) -> LandmarkMap {
    LandmarkMap {
        landmarks: positions
            .iter()
            .enumerate()
            .map(|(i, &position)| MappedLandmark {
                id: i as u32,
                position,
                descriptor: vec![0.5; 8],
                stats: LandmarkObsStats {
                    dist_min: 0.2,
                    dist_max: 50.0,
                    ang_min: 0.0,
                    ang_max: 90.0,
                    mean_view_dir: Vector3::z(),
                    cone_half_angle_deg: 180.0,
                    obs_count: 3,
                },
            })
            .collect(),
        mapping_poses: Vec::new(),
        cam: *cam,
        scene_seed: 0,
    }
}

/// An occupancy grid over the given bounds containing only the scene's
/// occluders (possibly none).
pub fn grid_of(scene: &Scene) -> OccupancyGrid {
    build_occupancy(scene, 0.08).unwrap()
}

/// An empty room: bounds only, no occluders, no scene landmarks.
pub fn empty_scene(size: [f64; 3]) -> Scene {
    Scene {
        bounds: vantage_core::scene::Aabb::new(
            Vector3::zeros(),
            Vector3::new(size[0], size[1], size[2]),
        ),
        occluders: Vec::new(),
        landmarks: Vec::new(),
        seed: 0,
    }
}

/// An occluder-free room whose ground-truth landmarks sit exactly at the
/// given positions (ids dense in input order), for pairing with
/// [`bare_map`] over the same list.
pub fn planted_scene(size: [f64; 3], positions: &[Vector3<f64>]) -> Scene {
    let mut scene = empty_scene(size);
    scene.landmarks = positions
        .iter()
        .enumerate()
        .map(|(i, &position)| vantage_core::scene::Landmark {
            id: i as u32,
            position,
            quality: 0.9,
        })
        .collect();
    scene
}

/// Normalization ranges wide enough for any fixture in these tests.
pub fn wide_ranges() -> NormRanges {
    NormRanges {
        distance: [0.0, 16.0],
        view_angle: [0.0, 90.0],
        dist_min: [0.0, 16.0],
        dist_max: [0.0, 16.0],
        ang_min: [0.0, 90.0],
        ang_max: [0.0, 90.0],
        dir_deviation: [0.0, 180.0],
        dist_margin_lo: [-16.0, 16.0],
        dist_margin_hi: [-16.0, 16.0],
        ang_margin_lo: [-90.0, 90.0],
        ang_margin_hi: [-90.0, 90.0],
        hist_cell_max: 60.0,
        heat_cell_max: 30.0,
        seen_count_max: 130.0,
    }
}

/// Randomly initialized (untrained) flat-model store over the default
/// aggregate layout.
pub fn mlp_store(seed: u64) -> ParamStore {
    let shape = AggregateShape::default();
    let params = MlpParams::init(shape.input_dim(), (8, 8), &mut derive_rng(seed, &[0x4d4c50]));
    let train = TrainConfig { hidden: (8, 8), ..TrainConfig::default_for(Arch::Mlp) };
    ParamStore::new(
        TrainedParams::Mlp(params),
        aggregate_schema(&shape),
        wide_ranges(),
        (0.1, 1.0),
        train,
    )
}

/// Randomly initialized (untrained) token-model store for `d_app`-wide
/// descriptors.
pub fn vpt_store(seed: u64, d_app: usize) -> ParamStore {
    let config = VptConfig {
        token_dim: token_dim(d_app),
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        n_blocks: 1,
        n_max: 32,
    };
    let params = VptParams::init(config, &mut derive_rng(seed, &[0x565054])).unwrap();
    let train = TrainConfig { vpt: config, ..TrainConfig::default_for(Arch::Vpt) };
    ParamStore::new(
        TrainedParams::Vpt(params),
        token_schema(d_app),
        wide_ranges(),
        (0.1, 1.0),
        train,
    )
}
