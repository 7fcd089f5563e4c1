//! Camera poses, pinhole projection, and viewpoint sampling.
//!
//! World frame: Z-up, right-handed. Camera frame: +Z forward, +X right,
//! +Y down (image row direction). A yaw of 0 and pitch of 0 looks along
//! +X world; yaw increases counter-clockwise (toward +Y), pitch > 0 looks
//! up.

use nalgebra::{Matrix3, Matrix4, SMatrix, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::rng;
use crate::Result;

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Camera center in world coordinates.
    pub position: Vector3<f64>,
    /// Rotation taking camera-frame vectors to world-frame vectors.
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose { position, orientation }
    }

    pub fn identity() -> Self {
        Pose { position: Vector3::zeros(), orientation: UnitQuaternion::identity() }
    }

    /// Build a pose from yaw/pitch in degrees (no roll). See the module
    /// docs for the frame convention.
    pub fn from_yaw_pitch_deg(position: Vector3<f64>, yaw_deg: f64, pitch_deg: f64) -> Self {
        let yaw = yaw_deg.to_radians();
        let pitch = pitch_deg.to_radians();
        let forward = Vector3::new(
            pitch.cos() * yaw.cos(),
            pitch.cos() * yaw.sin(),
            pitch.sin(),
        );
        let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
        let down = forward.cross(&right);
        let rot = Matrix3::from_columns(&[right, down, forward]);
        // The columns are orthonormal by construction, so the closed-form
        // conversion applies directly (the iterative nearest-rotation fit
        // would introduce ~1e-8 error).
        Pose {
            position,
            orientation: UnitQuaternion::from_rotation_matrix(
                &nalgebra::Rotation3::from_matrix_unchecked(rot),
            ),
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// Camera-frame +Z expressed in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    /// Camera-frame +X expressed in world coordinates.
    pub fn right(&self) -> Vector3<f64> {
        self.orientation * Vector3::x()
    }

    /// Camera-frame +Y expressed in world coordinates.
    pub fn down(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }

    /// Yaw of the optical axis in degrees, in (-180, 180].
    pub fn yaw_deg(&self) -> f64 {
        let f = self.forward();
        f.y.atan2(f.x).to_degrees()
    }

    /// Pitch of the optical axis in degrees, in [-90, 90].
    pub fn pitch_deg(&self) -> f64 {
        self.forward().z.clamp(-1.0, 1.0).asin().to_degrees()
    }

    /// World point -> camera frame.
    pub fn transform_to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (world - self.position)
    }

    /// Camera point -> world frame.
    pub fn transform_to_world(&self, cam: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * cam + self.position
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose { position: -(inv * self.position), orientation: inv }
    }

    /// Right-multiplied local perturbation: rotation by `xi[0..3]`
    /// (scaled-axis, camera frame) and translation by `xi[3..6]`
    /// (camera frame). This is the parameterization used by both the
    /// Gauss-Newton refinement and the Fisher-information Jacobians.
    pub fn retract(&self, xi: &Vector6<f64>) -> Pose {
        let phi = Vector3::new(xi[0], xi[1], xi[2]);
        let rho = Vector3::new(xi[3], xi[4], xi[5]);
        Pose {
            position: self.position + self.orientation * rho,
            orientation: self.orientation * UnitQuaternion::from_scaled_axis(phi),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }
}

/// Compose two camera-to-world transforms: `(a * b)(x) = a(b(x))`.
pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    // Re-normalize to keep long compose chains on the unit sphere.
    let q = (a.orientation * b.orientation).into_inner();
    Pose {
        position: a.position + a.orientation * b.position,
        orientation: UnitQuaternion::new_normalize(q),
    }
}

/// Geodesic angle between two orientations, in degrees.
///
/// Uses the atan2 form on the relative quaternion, which stays
/// well-conditioned near zero where `acos` of the dot product loses
/// roughly half the available precision.
pub fn rotation_geodesic_deg(a: &Pose, b: &Pose) -> f64 {
    let rel = a.orientation.inverse() * b.orientation;
    let q = rel.quaternion();
    let vec_norm = q.imag().norm();
    (2.0 * vec_norm.atan2(q.w.abs())).to_degrees()
}

/// Pinhole camera intrinsics plus a working depth range in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            width: 640,
            height: 480,
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
            near: 0.1,
            far: 15.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(CoreError::InvalidConfig("camera image size must be positive".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CoreError::InvalidConfig("camera focal lengths must be positive".into()));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(CoreError::InvalidConfig(format!(
                "camera depth range must satisfy 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        Ok(())
    }

    /// Unit bearing in the camera frame for a pixel.
    pub fn bearing(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }
}

/// Project a world point through a camera at `pose`. Returns `None` when
/// the point is outside the depth range `[near, far]` or the pixel falls
/// outside the image rectangle.
pub fn project(point: &Vector3<f64>, pose: &Pose, cam: &CameraModel) -> Option<(f64, f64)> {
    let pc = pose.transform_to_camera(point);
    if pc.z < cam.near || pc.z > cam.far {
        return None;
    }
    let u = cam.fx * pc.x / pc.z + cam.cx;
    let v = cam.fy * pc.y / pc.z + cam.cy;
    if u < 0.0 || u >= cam.width as f64 || v < 0.0 || v >= cam.height as f64 {
        return None;
    }
    Some((u, v))
}

/// Skew-symmetric matrix such that `skew(a) * b == a.cross(b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Projection plus its 2x6 Jacobian with respect to the [`Pose::retract`]
/// parameterization (columns 0..3 rotation, 3..6 translation). Returns
/// `None` under the same conditions as [`project`].
pub fn project_with_jacobian(
    point: &Vector3<f64>,
    pose: &Pose,
    cam: &CameraModel,
) -> Option<((f64, f64), SMatrix<f64, 2, 6>)> {
    let pc = pose.transform_to_camera(point);
    if pc.z < cam.near || pc.z > cam.far {
        return None;
    }
    let u = cam.fx * pc.x / pc.z + cam.cx;
    let v = cam.fy * pc.y / pc.z + cam.cy;
    if u < 0.0 || u >= cam.width as f64 || v < 0.0 || v >= cam.height as f64 {
        return None;
    }
    let z2 = pc.z * pc.z;
    // d(pixel)/d(camera point)
    let a = nalgebra::Matrix2x3::new(
        cam.fx / pc.z, 0.0, -cam.fx * pc.x / z2,
        0.0, cam.fy / pc.z, -cam.fy * pc.y / z2,
    );
    // Camera point under retract([phi, rho]) is exp(-phi) * (pc - rho),
    // so d(pc)/d(phi) = skew(pc) and d(pc)/d(rho) = -I.
    let mut j = SMatrix::<f64, 2, 6>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(a * skew(&pc)));
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-a));
    Some(((u, v), j))
}

/// Angle in degrees between the camera's optical axis and the ray from the
/// camera center to `point`.
pub fn principal_axis_angle_deg(pose: &Pose, point: &Vector3<f64>) -> Result<f64> {
    let ray = point - pose.position;
    let n = ray.norm();
    if n < 1e-12 {
        return Err(CoreError::DegenerateGeometry(
            "point coincides with the camera center".into(),
        ));
    }
    // atan2 of (cross, dot) is well-conditioned at both 0 and 180 degrees,
    // unlike acos of the normalized dot product.
    let fwd = pose.forward();
    let cross = ray.cross(&fwd).norm();
    let dot = ray.dot(&fwd);
    Ok(cross.atan2(dot).to_degrees())
}

/// One orientation hypothesis at a fixed position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewpointCandidate {
    pub index: usize,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub pose: Pose,
}

/// Sample `n` candidate orientations at `position`: yaw stratified over the
/// full circle (one draw per bin of width 360/n, so the set always covers
/// every direction), pitch uniform in `[pitch_min_deg, pitch_max_deg]`.
pub fn sample_viewpoints(
    position: &Vector3<f64>,
    n: usize,
    pitch_min_deg: f64,
    pitch_max_deg: f64,
    seed: u64,
) -> Result<Vec<ViewpointCandidate>> {
    if n == 0 {
        return Err(CoreError::InvalidConfig("viewpoint count must be positive".into()));
    }
    if pitch_min_deg > pitch_max_deg || pitch_min_deg < -90.0 || pitch_max_deg > 90.0 {
        return Err(CoreError::InvalidConfig(format!(
            "pitch range [{pitch_min_deg}, {pitch_max_deg}] is invalid"
        )));
    }
    let mut rng = rng::derive_rng(seed, &[rng::tags::CANDIDATE]);
    let bin = 360.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let yaw = bin * (i as f64 + rng.gen::<f64>()) - 180.0;
        let pitch = rng.gen_range(pitch_min_deg..=pitch_max_deg);
        out.push(ViewpointCandidate {
            index: i,
            yaw_deg: yaw,
            pitch_deg: pitch,
            pose: Pose::from_yaw_pitch_deg(*position, yaw, pitch),
        });
    }
    Ok(out)
}
