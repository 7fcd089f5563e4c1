//! Head-height mapping pass: a simulated walkthrough that observes scene
//! landmarks, records per-landmark viewing statistics, and produces the
//! landmark map that localization and all policies operate on.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::{principal_axis_angle_deg, CameraModel, Pose};
use crate::rng::{self, sample_normal, tags};
use crate::scene::{position_clear, ray_occluded, visible, OccupancyGrid, Scene};
use crate::Result;

/// Summary of how a landmark was seen during mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkObsStats {
    pub dist_min: f64,
    pub dist_max: f64,
    /// Principal-axis angle extremes over the observing poses, degrees.
    pub ang_min: f64,
    pub ang_max: f64,
    /// Mean unit direction from the landmark toward its observers.
    pub mean_view_dir: Vector3<f64>,
    /// Largest angle between `mean_view_dir` and any single observation
    /// direction, degrees.
    pub cone_half_angle_deg: f64,
    pub obs_count: usize,
}

/// A landmark as stored in the map: position estimate, appearance
/// descriptor, and observation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedLandmark {
    pub id: u32,
    pub position: Vector3<f64>,
    pub descriptor: Vec<f64>,
    pub stats: LandmarkObsStats,
}

/// Output of the mapping pass. Landmarks are sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkMap {
    pub landmarks: Vec<MappedLandmark>,
    pub mapping_poses: Vec<Pose>,
    pub cam: CameraModel,
    pub scene_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    /// Camera height of the mapping walkthrough, meters.
    pub height_m: f64,
    pub waypoint_count: usize,
    /// Orientation jitter around the direction of travel, degrees.
    pub yaw_jitter_deg: f64,
    pub pitch_range_deg: [f64; 2],
    /// Isotropic position noise added to mapped landmark positions.
    pub map_noise_sigma_m: f64,
    /// Minimum observations for a landmark to enter the map.
    pub min_obs: usize,
    /// Appearance descriptor dimension.
    pub d_app: usize,
    /// Free-space clearance required at trajectory waypoints.
    pub clearance_m: f64,
    pub voxel_size_m: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig {
            height_m: 1.6,
            waypoint_count: 60,
            yaw_jitter_deg: 15.0,
            pitch_range_deg: [-20.0, 5.0],
            map_noise_sigma_m: 0.01,
            min_obs: 2,
            d_app: 8,
            clearance_m: 0.2,
            voxel_size_m: 0.05,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.waypoint_count == 0 {
            return Err(CoreError::InvalidConfig("waypoint_count must be positive".into()));
        }
        if self.min_obs == 0 {
            return Err(CoreError::InvalidConfig("min_obs must be at least 1".into()));
        }
        if self.d_app == 0 {
            return Err(CoreError::InvalidConfig("d_app must be positive".into()));
        }
        if self.map_noise_sigma_m < 0.0 {
            return Err(CoreError::InvalidConfig("map_noise_sigma_m must be >= 0".into()));
        }
        if self.pitch_range_deg[0] > self.pitch_range_deg[1] {
            return Err(CoreError::InvalidConfig("pitch range is inverted".into()));
        }
        Ok(())
    }
}

/// Random-walk trajectory at a fixed camera height. Waypoints keep the
/// configured clearance; hops prefer collision-free sight lines and fall
/// back to a fresh free position when boxed in. Each pose looks roughly
/// toward the next waypoint with yaw jitter and a mild pitch.
pub fn make_mapping_trajectory(
    scene: &Scene,
    grid: &OccupancyGrid,
    cfg: &MappingConfig,
    seed: u64,
) -> Result<Vec<Pose>> {
    cfg.validate()?;
    let mut rng = rng::derive_rng(seed, &[tags::TRAJECTORY]);
    let b = &scene.bounds;
    let margin = 0.3;
    let sample_free = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vector3<f64>> {
        for _ in 0..2000 {
            let p = Vector3::new(
                rng.gen_range(b.min.x + margin..=b.max.x - margin),
                rng.gen_range(b.min.y + margin..=b.max.y - margin),
                cfg.height_m,
            );
            if position_clear(grid, &p, cfg.clearance_m) {
                return Ok(p);
            }
        }
        Err(CoreError::Generation(
            "could not find a clear mapping waypoint; scene too cluttered".into(),
        ))
    };

    let mut points = Vec::with_capacity(cfg.waypoint_count);
    points.push(sample_free(&mut rng)?);
    while points.len() < cfg.waypoint_count {
        let cur = *points.last().unwrap();
        let mut next = None;
        for _ in 0..200 {
            let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let step = rng.gen_range(0.8..=2.2);
            let cand = cur + Vector3::new(yaw.cos(), yaw.sin(), 0.0) * step;
            let inside = cand.x > b.min.x + margin
                && cand.x < b.max.x - margin
                && cand.y > b.min.y + margin
                && cand.y < b.max.y - margin;
            if inside
                && position_clear(grid, &cand, cfg.clearance_m)
                && !ray_occluded(grid, &cur, &cand).unwrap_or(true)
            {
                next = Some(cand);
                break;
            }
        }
        // Boxed in: restart from a fresh free spot.
        points.push(match next {
            Some(p) => p,
            None => sample_free(&mut rng)?,
        });
    }

    let mut poses = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let dir = if i + 1 < points.len() {
            points[i + 1] - points[i]
        } else if points.len() >= 2 {
            points[i] - points[i - 1]
        } else {
            Vector3::x()
        };
        let base_yaw = dir.y.atan2(dir.x).to_degrees();
        let yaw = base_yaw + rng.gen_range(-cfg.yaw_jitter_deg..=cfg.yaw_jitter_deg);
        let pitch = rng.gen_range(cfg.pitch_range_deg[0]..=cfg.pitch_range_deg[1]);
        poses.push(Pose::from_yaw_pitch_deg(points[i], yaw, pitch));
    }
    Ok(poses)
}

/// Raw descriptor before normalization: the first coordinate carries the
/// landmark's matchability, the rest are id-seeded noise.
fn descriptor_raw(quality: f64, d_app: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let mut d: Vec<f64> = (0..d_app).map(|_| sample_normal(rng)).collect();
    d[0] = 3.0 * (quality - 0.5) + 0.25 * d[0];
    d
}

/// Unit-norm synthetic appearance descriptor. Deterministic per
/// `(seed, id)`; the first coordinate correlates strongly with quality so
/// learned models can recover matchability from appearance.
pub fn synthetic_descriptor(quality: f64, id: u32, d_app: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::derive_rng(seed, &[tags::DESCRIPTOR, id as u64]);
    let mut d = descriptor_raw(quality, d_app, &mut rng);
    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        for x in d.iter_mut() {
            *x /= n;
        }
    } else {
        d[0] = 1.0;
    }
    d
}

/// Observe every scene landmark from the trajectory and keep those seen at
/// least `min_obs` times. Positions get isotropic Gaussian noise; stats
/// are computed against the true landmark position.
pub fn simulate_mapping(
    scene: &Scene,
    grid: &OccupancyGrid,
    trajectory: &[Pose],
    cam: &CameraModel,
    cfg: &MappingConfig,
    seed: u64,
) -> Result<LandmarkMap> {
    cfg.validate()?;
    cam.validate()?;
    if trajectory.is_empty() {
        return Err(CoreError::EmptyInput("mapping trajectory has no poses".into()));
    }
    let mut landmarks = Vec::new();
    for lm in &scene.landmarks {
        let observers: Vec<&Pose> = trajectory
            .iter()
            .filter(|pose| visible(grid, pose, cam, &lm.position))
            .collect();
        if observers.len() < cfg.min_obs {
            continue;
        }
        let mut dist_min = f64::INFINITY;
        let mut dist_max = 0.0f64;
        let mut ang_min = f64::INFINITY;
        let mut ang_max = 0.0f64;
        let mut dirs = Vec::with_capacity(observers.len());
        for pose in &observers {
            let d = (pose.position - lm.position).norm();
            dist_min = dist_min.min(d);
            dist_max = dist_max.max(d);
            // Observers are in front of the camera, so this cannot be
            // degenerate.
            let ang = principal_axis_angle_deg(pose, &lm.position)?;
            ang_min = ang_min.min(ang);
            ang_max = ang_max.max(ang);
            dirs.push((pose.position - lm.position) / d);
        }
        let mut mean: Vector3<f64> = dirs.iter().sum::<Vector3<f64>>() / dirs.len() as f64;
        if mean.norm() < 1e-9 {
            // Perfectly cancelling directions; fall back to the first.
            mean = dirs[0];
        }
        mean = mean.normalize();
        let cone = dirs
            .iter()
            .map(|d| mean.dot(d).clamp(-1.0, 1.0).acos().to_degrees())
            .fold(0.0f64, f64::max);

        let mut noise_rng = rng::derive_rng(seed, &[tags::MAP_NOISE, lm.id as u64]);
        let noise = Vector3::new(
            sample_normal(&mut noise_rng),
            sample_normal(&mut noise_rng),
            sample_normal(&mut noise_rng),
        ) * cfg.map_noise_sigma_m;

        landmarks.push(MappedLandmark {
            id: lm.id,
            position: lm.position + noise,
            descriptor: synthetic_descriptor(lm.quality, lm.id, cfg.d_app, seed),
            stats: LandmarkObsStats {
                dist_min,
                dist_max,
                ang_min,
                ang_max,
                mean_view_dir: mean,
                cone_half_angle_deg: cone,
                obs_count: observers.len(),
            },
        });
    }
    Ok(LandmarkMap {
        landmarks,
        mapping_poses: trajectory.to_vec(),
        cam: *cam,
        scene_seed: scene.seed,
    })
}

impl LandmarkMap {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&schema::MapFile::from_map(self))?)
    }

    pub fn from_json(text: &str) -> Result<LandmarkMap> {
        let f: schema::MapFile = serde_json::from_str(text)?;
        f.into_map()
    }
}

mod schema {
    use super::*;

    pub const MAP_SCHEMA_VERSION: u32 = 1;

    #[derive(Serialize, Deserialize)]
    pub struct MapFile {
        pub schema_version: u32,
        pub scene_seed: u64,
        pub cam: CameraModel,
        pub mapping_poses: Vec<PoseRec>,
        pub landmarks: Vec<MappedRec>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct PoseRec {
        pub position: [f64; 3],
        pub quat_wxyz: [f64; 4],
    }

    #[derive(Serialize, Deserialize)]
    pub struct MappedRec {
        pub id: u32,
        pub position: [f64; 3],
        pub descriptor: Vec<f64>,
        pub dist_min: f64,
        pub dist_max: f64,
        pub ang_min: f64,
        pub ang_max: f64,
        pub mean_view_dir: [f64; 3],
        pub cone_half_angle_deg: f64,
        pub obs_count: usize,
    }

    impl PoseRec {
        pub fn from_pose(p: &Pose) -> Self {
            let q = p.orientation.quaternion();
            PoseRec {
                position: [p.position.x, p.position.y, p.position.z],
                quat_wxyz: [q.w, q.i, q.j, q.k],
            }
        }

        pub fn into_pose(self) -> Pose {
            let [w, i, j, k] = self.quat_wxyz;
            Pose {
                position: Vector3::new(self.position[0], self.position[1], self.position[2]),
                orientation: nalgebra::UnitQuaternion::from_quaternion(
                    nalgebra::Quaternion::new(w, i, j, k),
                ),
            }
        }
    }

    impl MapFile {
        pub fn from_map(m: &LandmarkMap) -> Self {
            MapFile {
                schema_version: MAP_SCHEMA_VERSION,
                scene_seed: m.scene_seed,
                cam: m.cam,
                mapping_poses: m.mapping_poses.iter().map(PoseRec::from_pose).collect(),
                landmarks: m
                    .landmarks
                    .iter()
                    .map(|l| MappedRec {
                        id: l.id,
                        position: [l.position.x, l.position.y, l.position.z],
                        descriptor: l.descriptor.clone(),
                        dist_min: l.stats.dist_min,
                        dist_max: l.stats.dist_max,
                        ang_min: l.stats.ang_min,
                        ang_max: l.stats.ang_max,
                        mean_view_dir: [
                            l.stats.mean_view_dir.x,
                            l.stats.mean_view_dir.y,
                            l.stats.mean_view_dir.z,
                        ],
                        cone_half_angle_deg: l.stats.cone_half_angle_deg,
                        obs_count: l.stats.obs_count,
                    })
                    .collect(),
            }
        }

        pub fn into_map(self) -> crate::Result<LandmarkMap> {
            if self.schema_version != MAP_SCHEMA_VERSION {
                return Err(CoreError::Serialization(format!(
                    "unsupported map schema version {}",
                    self.schema_version
                )));
            }
            Ok(LandmarkMap {
                landmarks: self
                    .landmarks
                    .into_iter()
                    .map(|l| MappedLandmark {
                        id: l.id,
                        position: Vector3::new(l.position[0], l.position[1], l.position[2]),
                        descriptor: l.descriptor,
                        stats: LandmarkObsStats {
                            dist_min: l.dist_min,
                            dist_max: l.dist_max,
                            ang_min: l.ang_min,
                            ang_max: l.ang_max,
                            mean_view_dir: Vector3::new(
                                l.mean_view_dir[0],
                                l.mean_view_dir[1],
                                l.mean_view_dir[2],
                            ),
                            cone_half_angle_deg: l.cone_half_angle_deg,
                            obs_count: l.obs_count,
                        },
                    })
                    .collect(),
                mapping_poses: self.mapping_poses.into_iter().map(PoseRec::into_pose).collect(),
                cam: self.cam,
                scene_seed: self.scene_seed,
            })
        }
    }
}
