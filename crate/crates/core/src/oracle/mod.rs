//! Synthetic localization oracle: render noisy correspondences from a true
//! pose, then estimate the pose back with P3P + RANSAC + Gauss-Newton and
//! measure the error. Localization failure is a value, not an exception.

mod pnp;

pub use pnp::solve_p3p;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{project, rotation_geodesic_deg, CameraModel, Pose};
use crate::mapping::LandmarkMap;
use crate::rng::sample_normal;
use crate::scene::{visible, OccupancyGrid, Scene};

/// Observation noise model. Both the pixel noise and the outlier rate grow
/// as landmark quality drops: sigma scales by `(2 - q)` (so quality 0 is
/// twice as noisy as quality 1) and the outlier probability is
/// `rate_base * (2 - q) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub pixel_sigma_base: f64,
    pub outlier_rate_base: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { pixel_sigma_base: 1.0, outlier_rate_base: 0.1 }
    }
}

impl NoiseConfig {
    pub fn pixel_sigma(&self, quality: f64) -> f64 {
        self.pixel_sigma_base * (2.0 - quality)
    }

    pub fn outlier_rate(&self, quality: f64) -> f64 {
        self.outlier_rate_base * (2.0 - quality) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_threshold_px: f64,
    /// Minimum final inlier count for the estimate to count as a success.
    pub min_inliers: usize,
    /// Cap on accepted Gauss-Newton steps during refinement.
    pub refine_iterations: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 200,
            inlier_threshold_px: 3.0,
            min_inliers: 6,
            refine_iterations: 15,
        }
    }
}

/// A 2D-3D match handed to the estimator: the mapped landmark position
/// (which carries map noise) and a measured pixel. `is_outlier` records
/// ground truth about the measurement for diagnostics; the estimator
/// itself never reads it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub landmark_id: u32,
    pub map_point: Vector3<f64>,
    pub pixel: (f64, f64),
    pub is_outlier: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationResult {
    pub success: bool,
    pub estimated_pose: Pose,
    pub inlier_count: usize,
    /// Position error in meters; `f64::INFINITY` on failure.
    pub pos_error_m: f64,
    /// Rotation error in degrees; `f64::INFINITY` on failure.
    pub rot_error_deg: f64,
}

impl LocalizationResult {
    pub fn failure(inlier_count: usize) -> Self {
        LocalizationResult {
            success: false,
            estimated_pose: Pose::identity(),
            inlier_count,
            pos_error_m: f64::INFINITY,
            rot_error_deg: f64::INFINITY,
        }
    }
}

/// Render the correspondences a camera at `true_pose` would measure:
/// every mapped landmark that is visible in the ground-truth scene yields
/// a pixel at the exact projection of its true position plus
/// quality-scaled Gaussian noise, or a uniform random pixel when the draw
/// comes up an outlier. Pixels are clamped to the image rectangle.
///
/// The noise stream is consumed in map order (landmark id ascending), so a
/// fixed RNG reproduces the observation exactly.
pub fn observe(
    grid: &OccupancyGrid,
    scene: &Scene,
    map: &LandmarkMap,
    true_pose: &Pose,
    cam: &CameraModel,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Correspondence> {
    let mut out = Vec::new();
    for lm in &map.landmarks {
        let Some(true_pos) = scene.landmark_position(lm.id) else {
            continue;
        };
        if !visible(grid, true_pose, cam, &true_pos) {
            continue;
        }
        // visible() guarantees the projection exists.
        let (u0, v0) = project(&true_pos, true_pose, cam).unwrap();
        let quality = scene.landmark_quality(lm.id).unwrap_or(0.5);
        let sigma = noise.pixel_sigma(quality);
        let (nu, nv) = (sample_normal(rng), sample_normal(rng));
        let mut u = u0 + sigma * nu;
        let mut v = v0 + sigma * nv;
        let is_outlier = noise.outlier_rate_base > 0.0 && rng.gen::<f64>() < noise.outlier_rate(quality);
        if is_outlier {
            u = rng.gen_range(0.0..cam.width as f64);
            v = rng.gen_range(0.0..cam.height as f64);
        }
        let eps = 1e-9;
        u = u.clamp(0.0, cam.width as f64 - eps);
        v = v.clamp(0.0, cam.height as f64 - eps);
        out.push(Correspondence { landmark_id: lm.id, map_point: lm.position, pixel: (u, v), is_outlier });
    }
    out
}

/// Position error (meters) and rotation geodesic error (degrees).
pub fn pose_error(estimate: &Pose, truth: &Pose) -> (f64, f64) {
    (
        (estimate.position - truth.position).norm(),
        rotation_geodesic_deg(estimate, truth),
    )
}

/// Robust pose estimation from correspondences. Fewer than 4
/// correspondences, no valid RANSAC hypothesis, or a final inlier count
/// below `cfg.min_inliers` all produce a failure value. Errors are
/// measured against `true_pose`.
pub fn estimate_pose(
    corrs: &[Correspondence],
    cam: &CameraModel,
    cfg: &RansacConfig,
    true_pose: &Pose,
    rng: &mut ChaCha8Rng,
) -> LocalizationResult {
    let Some((hypothesis, inliers)) = pnp::ransac_pnp(corrs, cam, cfg, rng) else {
        return LocalizationResult::failure(0);
    };
    let (refined, _) = pnp::refine_pose(&hypothesis, corrs, &inliers, cam, cfg.refine_iterations);
    // Re-measure support with the refined pose.
    let final_inliers = {
        let t2 = cfg.inlier_threshold_px * cfg.inlier_threshold_px;
        corrs
            .iter()
            .filter(|c| {
                project(&c.map_point, &refined, cam).is_some_and(|(u, v)| {
                    let (du, dv) = (u - c.pixel.0, v - c.pixel.1);
                    du * du + dv * dv <= t2
                })
            })
            .count()
    };
    if final_inliers < cfg.min_inliers {
        return LocalizationResult::failure(final_inliers);
    }
    let (pos_error_m, rot_error_deg) = pose_error(&refined, true_pose);
    LocalizationResult {
        success: true,
        estimated_pose: refined,
        inlier_count: final_inliers,
        pos_error_m,
        rot_error_deg,
    }
}

/// Full oracle: observe from the true pose, then estimate.
#[allow(clippy::too_many_arguments)]
pub fn localize(
    grid: &OccupancyGrid,
    scene: &Scene,
    map: &LandmarkMap,
    true_pose: &Pose,
    cam: &CameraModel,
    noise: &NoiseConfig,
    ransac: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> LocalizationResult {
    let corrs = observe(grid, scene, map, true_pose, cam, noise, rng);
    estimate_pose(&corrs, cam, ransac, true_pose, rng)
}
