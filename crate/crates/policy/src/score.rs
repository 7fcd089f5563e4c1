//! Count- and information-based scoring functions.

use nalgebra::{Matrix2x3, SMatrix, Vector3};
use vantage_core::features::{CONE_SLACK_DEG, DIST_SLACK_HI, DIST_SLACK_LO};
use vantage_core::geom::{project, skew, Pose};
use vantage_core::mapping::LandmarkMap;
use vantage_core::scene::visible;
use vantage_core::{CameraModel, OccupancyGrid};

use crate::error::PolicyError;
use crate::kinds::Scalarization;
use crate::Result;

/// Damping added to the information matrix before taking `log det`, so an
/// empty or rank-deficient view scores a finite floor value.
pub const LOG_DET_DAMPING: f64 = 1e-9;

/// Whether a mapped landmark counts as visible from `pose` under the
/// chosen visibility mode: inside the image and depth range, and (with
/// `occlusion_filter`) with a clear sight line in the occupancy grid.
fn counts_as_visible(
    position: &Vector3<f64>,
    pose: &Pose,
    cam: &CameraModel,
    grid: &OccupancyGrid,
    occlusion_filter: bool,
) -> bool {
    if occlusion_filter {
        visible(grid, pose, cam, position)
    } else {
        project(position, pose, cam).is_some()
    }
}

/// Number of mapped landmarks visible from `pose`.
pub fn score_max(
    map: &LandmarkMap,
    pose: &Pose,
    cam: &CameraModel,
    grid: &OccupancyGrid,
    occlusion_filter: bool,
) -> usize {
    map.landmarks
        .iter()
        .filter(|lm| counts_as_visible(&lm.position, pose, cam, grid, occlusion_filter))
        .count()
}

/// Number of visible mapped landmarks whose relative location falls
/// inside the range they were observed from during mapping: within the
/// observation cone around the mean viewing direction (plus slack) and
/// within the slack-widened distance window.
pub fn score_angle(
    map: &LandmarkMap,
    pose: &Pose,
    cam: &CameraModel,
    grid: &OccupancyGrid,
    occlusion_filter: bool,
) -> usize {
    map.landmarks
        .iter()
        .filter(|lm| {
            if !counts_as_visible(&lm.position, pose, cam, grid, occlusion_filter) {
                return false;
            }
            let offset = pose.position - lm.position;
            let distance = offset.norm();
            if distance < f64::MIN_POSITIVE {
                return false;
            }
            let deviation_deg = (offset / distance)
                .dot(&lm.stats.mean_view_dir)
                .clamp(-1.0, 1.0)
                .acos()
                .to_degrees();
            deviation_deg <= lm.stats.cone_half_angle_deg + CONE_SLACK_DEG
                && distance >= DIST_SLACK_LO * lm.stats.dist_min
                && distance <= DIST_SLACK_HI * lm.stats.dist_max
        })
        .count()
}

/// Fisher information of observing one landmark from `pose` under
/// isotropic pixel noise: `J^T J / sigma^2`, where `J` is the 2x6
/// Jacobian of the pinhole projection with respect to a right-multiplied
/// local pose perturbation (columns 0..3 rotation, 3..6 translation).
///
/// The landmark must be in front of the camera; image bounds are not
/// checked here because visibility gating is the caller's concern.
pub fn fim_single(
    map_point: &Vector3<f64>,
    pose: &Pose,
    cam: &CameraModel,
    pixel_sigma: f64,
) -> Result<SMatrix<f64, 6, 6>> {
    if !(pixel_sigma > 0.0) {
        return Err(PolicyError::InvalidConfig(format!(
            "pixel_sigma must be positive, got {pixel_sigma}"
        )));
    }
    let pc = pose.transform_to_camera(map_point);
    if pc.z <= 1e-9 {
        return Err(PolicyError::DegenerateGeometry(format!(
            "landmark at depth {} is at or behind the camera plane",
            pc.z
        )));
    }
    let z2 = pc.z * pc.z;
    // d(pixel)/d(camera point) for the pinhole model.
    let a = Matrix2x3::new(
        cam.fx / pc.z,
        0.0,
        -cam.fx * pc.x / z2,
        0.0,
        cam.fy / pc.z,
        -cam.fy * pc.y / z2,
    );
    // Camera point under retract([phi, rho]) is exp(-phi) * (pc - rho),
    // so d(pc)/d(phi) = skew(pc) and d(pc)/d(rho) = -I.
    let mut j = SMatrix::<f64, 2, 6>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(a * skew(&pc)));
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-a));
    let inv_var = 1.0 / (pixel_sigma * pixel_sigma);
    Ok(j.transpose() * j * inv_var)
}

/// Apply a scalar reduction to a summed information matrix.
pub fn scalarize(info: &SMatrix<f64, 6, 6>, scalarization: Scalarization) -> f64 {
    match scalarization {
        Scalarization::Trace => info.trace(),
        Scalarization::LogDetDamped => {
            let eig = info.symmetric_eigenvalues();
            eig.iter().map(|&l| (l.max(0.0) + LOG_DET_DAMPING).ln()).sum()
        }
        Scalarization::MinEig => {
            let eig = info.symmetric_eigenvalues();
            eig.iter().fold(f64::INFINITY, |m, &l| m.min(l)).max(0.0)
        }
    }
}

/// Scalarized total Fisher information over the landmarks visible from
/// `pose` under the chosen visibility mode.
pub fn score_fim(
    map: &LandmarkMap,
    pose: &Pose,
    cam: &CameraModel,
    grid: &OccupancyGrid,
    occlusion_filter: bool,
    pixel_sigma: f64,
    scalarization: Scalarization,
) -> Result<f64> {
    if !(pixel_sigma > 0.0) {
        return Err(PolicyError::InvalidConfig(format!(
            "pixel_sigma must be positive, got {pixel_sigma}"
        )));
    }
    let mut total = SMatrix::<f64, 6, 6>::zeros();
    for lm in &map.landmarks {
        if counts_as_visible(&lm.position, pose, cam, grid, occlusion_filter) {
            // Visibility implies depth >= the camera's near plane, so the
            // per-landmark term cannot hit the zero-depth error.
            total += fim_single(&lm.position, pose, cam, pixel_sigma)?;
        }
    }
    Ok(scalarize(&total, scalarization))
}
