//! Minimal-solver PnP machinery: Grunert's P3P, Kabsch absolute
//! orientation, RANSAC over 4-point samples, and damped Gauss-Newton
//! refinement.

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geom::{skew, CameraModel, Pose};

use super::{Correspondence, RansacConfig};

/// Multiply two polynomials given as low-to-high coefficient slices.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &k)| k * i as f64)
        .collect()
}

/// Real roots of a polynomial (low-to-high coefficients) via the
/// companion-matrix eigenvalues, with a short Newton polish.
pub(crate) fn poly_real_roots(coeffs: &[f64]) -> Vec<f64> {
    // Trim numerically-zero leading coefficients.
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() < 1e-13 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let eig = comp.complex_eigenvalues();
    let deriv = poly_deriv(&coeffs[..=deg]);
    let mut roots = Vec::new();
    for e in eig.iter() {
        if e.im.abs() > 1e-8 * (1.0 + e.re.abs()) {
            continue;
        }
        let mut x = e.re;
        for _ in 0..3 {
            let f = poly_eval(&coeffs[..=deg], x);
            let d = poly_eval(&deriv, x);
            if d.abs() < 1e-300 {
                break;
            }
            let step = f / d;
            if !step.is_finite() {
                break;
            }
            x -= step;
        }
        if roots.iter().all(|&r: &f64| (r - x).abs() > 1e-10 * (1.0 + x.abs())) {
            roots.push(x);
        }
    }
    roots
}

/// Rigid transform mapping camera points onto world points
/// (`world = R * cam + t`), i.e. a camera-to-world pose. Kabsch with the
/// usual determinant correction. `None` for degenerate inputs.
pub(crate) fn absolute_orientation(cam_pts: &[Vector3<f64>], world_pts: &[Vector3<f64>]) -> Option<Pose> {
    debug_assert_eq!(cam_pts.len(), world_pts.len());
    let n = cam_pts.len() as f64;
    if cam_pts.len() < 3 {
        return None;
    }
    let qc = cam_pts.iter().sum::<Vector3<f64>>() / n;
    let pc = world_pts.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::<f64>::zeros();
    for (q, p) in cam_pts.iter().zip(world_pts) {
        h += (q - qc) * (p - pc).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum()));
    let r = v * fix * u.transpose();
    if !r.iter().all(|x| x.is_finite()) {
        return None;
    }
    let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
    let t = pc - r * qc;
    Some(Pose { position: t, orientation: nalgebra::UnitQuaternion::from_rotation_matrix(&rot) })
}

/// Grunert's P3P: camera-to-world poses consistent with three world points
/// and their unit bearing vectors in the camera frame. Up to four
/// solutions; degenerate geometry yields an empty set.
pub fn solve_p3p(world: &[Vector3<f64>; 3], bearings: &[Vector3<f64>; 3]) -> Vec<Pose> {
    let (p1, p2, p3) = (world[0], world[1], world[2]);
    let (f1, f2, f3) = (bearings[0], bearings[1], bearings[2]);
    // Triangle sides: a opposite P1, b opposite P2, c opposite P3.
    let a2 = (p2 - p3).norm_squared();
    let b2 = (p1 - p3).norm_squared();
    let c2 = (p1 - p2).norm_squared();
    if a2 < 1e-18 || b2 < 1e-18 || c2 < 1e-18 {
        return Vec::new();
    }
    let cos_alpha = f2.dot(&f3);
    let cos_beta = f1.dot(&f3);
    let cos_gamma = f1.dot(&f2);

    // Distances s1, s2 = u*s1, s3 = v*s1 from the camera center satisfy
    //   s1^2 (1 + u^2 - 2 u cos_gamma)  = c^2
    //   s1^2 (1 + v^2 - 2 v cos_beta)   = b^2
    //   s1^2 (u^2 + v^2 - 2 u v cos_alpha) = a^2
    // Eliminating u gives a quartic in v. The coefficients below are built
    // by polynomial arithmetic from the intermediate forms rather than a
    // hand-expanded closed form.
    let k1 = a2 / b2;
    let k2 = c2 / b2;
    let a1 = k1 - k2; // (a^2 - c^2) / b^2
    // u = n(v) / d(v)
    let n = [a1 + 1.0, -2.0 * a1 * cos_beta, a1 - 1.0];
    let d = [2.0 * cos_gamma, -2.0 * cos_alpha];
    // g(v) = 1 - k2 * (1 + v^2 - 2 v cos_beta)
    let g = [1.0 - k2, 2.0 * k2 * cos_beta, -k2];
    // Quartic: n^2 - 2 cos_gamma n d + g d^2 = 0.
    let nn = poly_mul(&n, &n);
    let nd = poly_mul(&n, &d);
    let gdd = poly_mul(&g, &poly_mul(&d, &d));
    let mut quartic = [0.0f64; 5];
    for i in 0..5 {
        let mut c = *nn.get(i).unwrap_or(&0.0);
        c -= 2.0 * cos_gamma * nd.get(i).unwrap_or(&0.0);
        c += gdd.get(i).unwrap_or(&0.0);
        quartic[i] = c;
    }

    let mut poses = Vec::new();
    for v in poly_real_roots(&quartic) {
        if !(v.is_finite() && v > 0.0) {
            continue;
        }
        let denom = poly_eval(&d, v);
        if denom.abs() < 1e-12 {
            continue;
        }
        let u = poly_eval(&n, v) / denom;
        if !(u.is_finite() && u > 0.0) {
            continue;
        }
        let w = 1.0 + v * v - 2.0 * v * cos_beta;
        if w <= 1e-15 {
            continue;
        }
        let s1 = (b2 / w).sqrt();
        let (s2, s3) = (u * s1, v * s1);
        let cam_pts = [f1 * s1, f2 * s2, f3 * s3];
        let Some(pose) = absolute_orientation(&cam_pts, &[p1, p2, p3]) else {
            continue;
        };
        // All three points must land in front of the camera.
        if [p1, p2, p3]
            .iter()
            .any(|p| pose.transform_to_camera(p).z <= 0.0)
        {
            continue;
        }
        if poses
            .iter()
            .all(|q: &Pose| (q.position - pose.position).norm() > 1e-9)
        {
            poses.push(pose);
        }
    }
    poses
}

/// Residual and Jacobian helpers for refinement. Unlike [`crate::geom::project`]
/// these do not gate on the image rectangle or the far plane: during
/// iteration a point may wander slightly out of frame and the optimizer
/// still needs a gradient back.
fn raw_residual(pose: &Pose, point: &Vector3<f64>, pixel: (f64, f64), cam: &CameraModel) -> Option<nalgebra::Vector2<f64>> {
    let pc = pose.transform_to_camera(point);
    if pc.z <= 1e-6 {
        return None;
    }
    Some(nalgebra::Vector2::new(
        cam.fx * pc.x / pc.z + cam.cx - pixel.0,
        cam.fy * pc.y / pc.z + cam.cy - pixel.1,
    ))
}

fn raw_jacobian(pose: &Pose, point: &Vector3<f64>, cam: &CameraModel) -> Option<SMatrix<f64, 2, 6>> {
    let pc = pose.transform_to_camera(point);
    if pc.z <= 1e-6 {
        return None;
    }
    let z2 = pc.z * pc.z;
    let a = nalgebra::Matrix2x3::new(
        cam.fx / pc.z, 0.0, -cam.fx * pc.x / z2,
        0.0, cam.fy / pc.z, -cam.fy * pc.y / z2,
    );
    let mut j = SMatrix::<f64, 2, 6>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(a * skew(&pc)));
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-a));
    Some(j)
}

fn total_cost(
    pose: &Pose,
    corrs: &[Correspondence],
    idx: &[usize],
    cam: &CameraModel,
) -> Option<f64> {
    let mut c = 0.0;
    for &i in idx {
        let r = raw_residual(pose, &corrs[i].map_point, corrs[i].pixel, cam)?;
        c += r.norm_squared();
    }
    Some(c)
}

/// Levenberg-damped Gauss-Newton over the 6-dof retraction. Returns the
/// refined pose and the history of accepted costs, which is strictly
/// non-increasing by construction.
pub(crate) fn refine_pose(
    pose0: &Pose,
    corrs: &[Correspondence],
    idx: &[usize],
    cam: &CameraModel,
    max_iters: usize,
) -> (Pose, Vec<f64>) {
    let mut pose = *pose0;
    let Some(mut cost) = total_cost(&pose, corrs, idx, cam) else {
        return (pose, Vec::new());
    };
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    'outer: for _ in 0..max_iters {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for &i in idx {
            let (Some(j), Some(r)) = (
                raw_jacobian(&pose, &corrs[i].map_point, cam),
                raw_residual(&pose, &corrs[i].map_point, corrs[i].pixel, cam),
            ) else {
                break 'outer;
            };
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let mut accepted = false;
        for _ in 0..8 {
            let mut damped = h;
            for k in 0..6 {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-g));
            let cand = pose.retract(&delta);
            match total_cost(&cand, corrs, idx, cam) {
                Some(c) if c < cost => {
                    pose = cand;
                    cost = c;
                    history.push(c);
                    lambda = (lambda * 0.3).max(1e-12);
                    accepted = true;
                    if delta.amax() < 1e-14 {
                        break 'outer;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            break;
        }
    }
    (pose, history)
}

fn count_inliers(
    pose: &Pose,
    corrs: &[Correspondence],
    cam: &CameraModel,
    threshold_px: f64,
) -> Vec<usize> {
    let t2 = threshold_px * threshold_px;
    let mut inliers = Vec::new();
    for (i, c) in corrs.iter().enumerate() {
        if let Some((u, v)) = crate::geom::project(&c.map_point, pose, cam) {
            let du = u - c.pixel.0;
            let dv = v - c.pixel.1;
            if du * du + dv * dv <= t2 {
                inliers.push(i);
            }
        }
    }
    inliers
}

/// RANSAC over 4-point samples: three points feed P3P, the fourth picks
/// among its solutions. Returns the best hypothesis pose and its inlier
/// set (pre-refinement), or `None` when no sample produced a valid pose
/// with at least 4 inliers.
pub(crate) fn ransac_pnp(
    corrs: &[Correspondence],
    cam: &CameraModel,
    cfg: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(Pose, Vec<usize>)> {
    let n = corrs.len();
    if n < 4 {
        return None;
    }
    let bearings: Vec<Vector3<f64>> = corrs.iter().map(|c| cam.bearing(c.pixel.0, c.pixel.1)).collect();
    let mut best: Option<(Pose, Vec<usize>)> = None;
    for _ in 0..cfg.iterations {
        let mut pick = [0usize; 4];
        for k in 0..4 {
            loop {
                let i = rng.gen_range(0..n);
                if !pick[..k].contains(&i) {
                    pick[k] = i;
                    break;
                }
            }
        }
        let world = [corrs[pick[0]].map_point, corrs[pick[1]].map_point, corrs[pick[2]].map_point];
        // Skip nearly-collinear world triples and nearly-parallel rays.
        let cr = (world[1] - world[0]).cross(&(world[2] - world[0])).norm();
        if cr < 1e-9 {
            continue;
        }
        let f = [bearings[pick[0]], bearings[pick[1]], bearings[pick[2]]];
        if f[0].dot(&f[1]).abs() > 1.0 - 1e-12
            || f[0].dot(&f[2]).abs() > 1.0 - 1e-12
            || f[1].dot(&f[2]).abs() > 1.0 - 1e-12
        {
            continue;
        }
        let sols = solve_p3p(&world, &f);
        // Disambiguate with the fourth correspondence.
        let fourth = &corrs[pick[3]];
        let mut chosen: Option<(f64, Pose)> = None;
        for s in sols {
            let Some(r) = raw_residual(&s, &fourth.map_point, fourth.pixel, cam) else {
                continue;
            };
            let e = r.norm_squared();
            if chosen.as_ref().map_or(true, |(be, _)| e < *be) {
                chosen = Some((e, s));
            }
        }
        let Some((_, pose)) = chosen else { continue };
        let inliers = count_inliers(&pose, corrs, cam, cfg.inlier_threshold_px);
        if inliers.len() >= 4
            && best.as_ref().map_or(true, |(_, b)| inliers.len() > b.len())
        {
            best = Some((pose, inliers));
        }
    }
    best
}
