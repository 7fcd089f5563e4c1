//! Procedural scene generation.
//!
//! The recipe is deliberately simple: a rectangular room, a few interior
//! partition walls reaching (nearly) the ceiling, a set of low
//! furniture-height boxes, and landmarks pinned to surfaces. Landmarks on
//! furniture tops are visible to a head-height mapping camera looking down
//! but mostly hidden from a knee-height robot camera, which is what makes
//! occlusion reasoning worth benchmarking in this world.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Aabb, Landmark, Occluder, OccluderKind, Scene};
use crate::error::CoreError;
use crate::rng::{self, tags};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Room extents in meters; the room spans `[0, size]` on each axis.
    pub room_size: [f64; 3],
    pub landmark_count: usize,
    /// Interior partition walls (tall boxes protruding from a perimeter
    /// wall, always leaving a gap for passage).
    pub wall_occluder_count: usize,
    /// Furniture-height boxes.
    pub low_occluder_count: usize,
    pub low_footprint_range: [f64; 2],
    pub low_height_range: [f64; 2],
    pub wall_length_range: [f64; 2],
    pub wall_thickness_range: [f64; 2],
    pub wall_height_range: [f64; 2],
    /// Fraction of landmarks placed on furniture tops (rounded; zero when
    /// there is no furniture).
    pub elevated_fraction: f64,
    /// Per-surface base quality is drawn uniformly from this range...
    pub quality_surface_range: [f64; 2],
    /// ...then each landmark jitters around its surface base by +/- this.
    pub quality_jitter: f64,
    /// Keep-out margin between furniture and the perimeter walls.
    pub perimeter_margin: f64,
    /// Height band for wall-mounted landmarks.
    pub landmark_height_range: [f64; 2],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            room_size: [8.0, 8.0, 3.0],
            landmark_count: 260,
            wall_occluder_count: 3,
            low_occluder_count: 8,
            low_footprint_range: [0.5, 1.5],
            low_height_range: [0.4, 0.9],
            wall_length_range: [2.5, 4.5],
            wall_thickness_range: [0.1, 0.2],
            wall_height_range: [2.2, 3.0],
            elevated_fraction: 0.35,
            quality_surface_range: [0.1, 0.95],
            quality_jitter: 0.15,
            perimeter_margin: 0.3,
            landmark_height_range: [0.3, 2.6],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        if self.room_size.iter().any(|&s| s < 2.0) {
            return bad(format!("room_size {:?} must be at least 2m per axis", self.room_size));
        }
        if self.landmark_count == 0 {
            return bad("landmark_count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.elevated_fraction) {
            return bad(format!("elevated_fraction {} outside [0,1]", self.elevated_fraction));
        }
        for (name, r) in [
            ("low_footprint_range", self.low_footprint_range),
            ("low_height_range", self.low_height_range),
            ("wall_length_range", self.wall_length_range),
            ("wall_thickness_range", self.wall_thickness_range),
            ("wall_height_range", self.wall_height_range),
            ("quality_surface_range", self.quality_surface_range),
            ("landmark_height_range", self.landmark_height_range),
        ] {
            if !(r[0] <= r[1] && r[0].is_finite() && r[1].is_finite()) {
                return bad(format!("{name} {r:?} is not an ordered finite range"));
            }
        }
        if !(0.0..=1.0).contains(&self.quality_surface_range[0])
            || !(0.0..=1.0).contains(&self.quality_surface_range[1])
        {
            return bad("quality_surface_range must lie in [0,1]".into());
        }
        if self.quality_jitter < 0.0 {
            return bad("quality_jitter must be non-negative".into());
        }
        if self.low_footprint_range[1] + 2.0 * self.perimeter_margin > self.room_size[0].min(self.room_size[1])
        {
            return bad("furniture cannot fit the room with the requested margin".into());
        }
        Ok(())
    }
}

/// A flat rectangle landmarks can be pinned to.
struct Surface {
    /// Two corners of the rectangle; exactly one world axis is constant.
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// Axis that is constant across the rectangle.
    flat_axis: usize,
    /// Offset applied along `flat_axis` so landmarks sit just off the
    /// surface on its open side.
    inset: f64,
    base_quality: f64,
}

impl Surface {
    fn area(&self) -> f64 {
        let e = self.hi - self.lo;
        let (a, b) = match self.flat_axis {
            0 => (e.y, e.z),
            1 => (e.x, e.z),
            _ => (e.x, e.y),
        };
        (a * b).abs()
    }
}

/// Generate a scene. Identical `(config, seed)` pairs produce identical
/// scenes on every platform.
pub fn gen_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = rng::derive_rng(seed, &[tags::SCENE]);
    let size = Vector3::new(config.room_size[0], config.room_size[1], config.room_size[2]);
    let bounds = Aabb::new(Vector3::zeros(), size);

    let mut occluders = Vec::new();

    // Partition walls: protrude from one of the four perimeter walls,
    // always leaving at least 1.2m of passage at the free end.
    for _ in 0..config.wall_occluder_count {
        let side = rng.gen_range(0..4u32);
        let t = rng.gen_range(config.wall_thickness_range[0]..=config.wall_thickness_range[1]);
        let h = rng
            .gen_range(config.wall_height_range[0]..=config.wall_height_range[1])
            .min(size.z);
        let run_axis = if side < 2 { 0 } else { 1 };
        let along_axis = 1 - run_axis;
        let max_len = size[run_axis] - 1.2;
        let len = rng
            .gen_range(config.wall_length_range[0]..=config.wall_length_range[1])
            .min(max_len);
        let anchor = rng.gen_range(1.0..=size[along_axis] - 1.0);
        let (run_lo, run_hi) = if side % 2 == 0 { (0.0, len) } else { (size[run_axis] - len, size[run_axis]) };
        let mut lo = Vector3::zeros();
        let mut hi = Vector3::zeros();
        lo[run_axis] = run_lo;
        hi[run_axis] = run_hi;
        lo[along_axis] = (anchor - t / 2.0).max(0.0);
        hi[along_axis] = (anchor + t / 2.0).min(size[along_axis]);
        lo.z = 0.0;
        hi.z = h;
        occluders.push(Occluder { aabb: Aabb::new(lo, hi), kind: OccluderKind::Wall });
    }

    // Furniture boxes, kept off the perimeter.
    for _ in 0..config.low_occluder_count {
        let sx = rng.gen_range(config.low_footprint_range[0]..=config.low_footprint_range[1]);
        let sy = rng.gen_range(config.low_footprint_range[0]..=config.low_footprint_range[1]);
        let h = rng.gen_range(config.low_height_range[0]..=config.low_height_range[1]);
        let m = config.perimeter_margin;
        let cx = rng.gen_range(m + sx / 2.0..=size.x - m - sx / 2.0);
        let cy = rng.gen_range(m + sy / 2.0..=size.y - m - sy / 2.0);
        let lo = Vector3::new(cx - sx / 2.0, cy - sy / 2.0, 0.0);
        let hi = Vector3::new(cx + sx / 2.0, cy + sy / 2.0, h);
        occluders.push(Occluder { aabb: Aabb::new(lo, hi), kind: OccluderKind::Low });
    }

    // Surfaces, in a fixed order: 4 perimeter walls, 2 faces per
    // partition, 1 top per furniture box. Each gets a base quality so
    // matchability is spatially clustered rather than i.i.d.
    let mut surfaces = Vec::new();
    let inset = 0.02;
    let lm_z = [
        config.landmark_height_range[0].min(size.z - 0.1),
        config.landmark_height_range[1].min(size.z - 0.1),
    ];
    // x = 0 and x = W walls.
    surfaces.push(Surface {
        lo: Vector3::new(0.0, 0.05, lm_z[0]),
        hi: Vector3::new(0.0, size.y - 0.05, lm_z[1]),
        flat_axis: 0,
        inset,
        base_quality: 0.0,
    });
    surfaces.push(Surface {
        lo: Vector3::new(size.x, 0.05, lm_z[0]),
        hi: Vector3::new(size.x, size.y - 0.05, lm_z[1]),
        flat_axis: 0,
        inset: -inset,
        base_quality: 0.0,
    });
    surfaces.push(Surface {
        lo: Vector3::new(0.05, 0.0, lm_z[0]),
        hi: Vector3::new(size.x - 0.05, 0.0, lm_z[1]),
        flat_axis: 1,
        inset,
        base_quality: 0.0,
    });
    surfaces.push(Surface {
        lo: Vector3::new(0.05, size.y, lm_z[0]),
        hi: Vector3::new(size.x - 0.05, size.y, lm_z[1]),
        flat_axis: 1,
        inset: -inset,
        base_quality: 0.0,
    });
    for occ in occluders.iter().filter(|o| o.kind == OccluderKind::Wall) {
        let b = &occ.aabb;
        let e = b.extent();
        let flat_axis = if e.x < e.y { 0 } else { 1 };
        let z_hi = (b.max.z - 0.05).min(lm_z[1]);
        for (coord, s) in [(b.min[flat_axis], -inset), (b.max[flat_axis], inset)] {
            let mut lo = b.min + Vector3::new(0.05, 0.05, 0.0);
            let mut hi = b.max - Vector3::new(0.05, 0.05, 0.0);
            lo[flat_axis] = coord;
            hi[flat_axis] = coord;
            lo.z = lm_z[0].min(z_hi);
            hi.z = z_hi;
            surfaces.push(Surface { lo, hi, flat_axis, inset: s, base_quality: 0.0 });
        }
    }
    let furniture: Vec<Aabb> = occluders
        .iter()
        .filter(|o| o.kind == OccluderKind::Low)
        .map(|o| o.aabb)
        .collect();
    for b in &furniture {
        // Inner half of the top face, so top landmarks sit behind the lip
        // when seen from below.
        let e = b.extent();
        surfaces.push(Surface {
            lo: Vector3::new(b.min.x + 0.25 * e.x, b.min.y + 0.25 * e.y, b.max.z),
            hi: Vector3::new(b.max.x - 0.25 * e.x, b.max.y - 0.25 * e.y, b.max.z),
            flat_axis: 2,
            inset,
            base_quality: 0.0,
        });
    }
    for s in surfaces.iter_mut() {
        s.base_quality =
            rng.gen_range(config.quality_surface_range[0]..=config.quality_surface_range[1]);
    }

    // Landmarks: furniture tops first, then area-weighted wall placement.
    let n_top_surfaces = furniture.len();
    let n_elevated = if n_top_surfaces == 0 {
        0
    } else {
        ((config.landmark_count as f64 * config.elevated_fraction).round() as usize)
            .min(config.landmark_count)
    };
    let wall_surfaces = surfaces.len() - n_top_surfaces;
    let wall_areas: Vec<f64> = surfaces[..wall_surfaces].iter().map(|s| s.area()).collect();
    let wall_area_total: f64 = wall_areas.iter().sum();
    if wall_area_total <= 0.0 {
        return Err(CoreError::Generation("no wall surface area for landmarks".into()));
    }

    let mut landmarks = Vec::with_capacity(config.landmark_count);
    let place = |s: &Surface, rng: &mut rand_chacha::ChaCha8Rng, id: u32| {
        let mut p = Vector3::zeros();
        for k in 0..3 {
            p[k] = if k == s.flat_axis || s.hi[k] <= s.lo[k] {
                s.lo[k]
            } else {
                rng.gen_range(s.lo[k]..=s.hi[k])
            };
        }
        p[s.flat_axis] += s.inset;
        let q = (s.base_quality + rng.gen_range(-config.quality_jitter..=config.quality_jitter))
            .clamp(0.01, 1.0);
        Landmark { id, position: p, quality: q }
    };
    for i in 0..n_elevated {
        let si = wall_surfaces + rng.gen_range(0..n_top_surfaces);
        landmarks.push(place(&surfaces[si], &mut rng, i as u32));
    }
    for i in n_elevated..config.landmark_count {
        let mut pick = rng.gen_range(0.0..wall_area_total);
        let mut si = 0;
        for (k, a) in wall_areas.iter().enumerate() {
            if pick < *a || k == wall_areas.len() - 1 {
                si = k;
                break;
            }
            pick -= a;
        }
        landmarks.push(place(&surfaces[si], &mut rng, i as u32));
    }

    debug_assert!(landmarks.iter().all(|l| {
        (0..3).all(|k| l.position[k] >= bounds.min[k] && l.position[k] <= bounds.max[k])
    }));

    Ok(Scene { bounds, occluders, landmarks, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analytic segment-vs-box test (slab method), independent of the
    /// voxel grid: used as the visibility oracle in census checks.
    pub(crate) fn segment_hits_box(a: &Vector3<f64>, b: &Vector3<f64>, aabb: &Aabb) -> bool {
        let d = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if a[k] < aabb.min[k] || a[k] > aabb.max[k] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[k];
                let (mut ta, mut tb) = ((aabb.min[k] - a[k]) * inv, (aabb.max[k] - a[k]) * inv);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let cfg = SceneConfig::default();
        let a = gen_scene(&cfg, 7).unwrap();
        let b = gen_scene(&cfg, 7).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = gen_scene(&cfg, 8).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn landmarks_dense_inside_and_scored() {
        let cfg = SceneConfig::default();
        let s = gen_scene(&cfg, 42).unwrap();
        assert_eq!(s.landmarks.len(), cfg.landmark_count);
        for (i, l) in s.landmarks.iter().enumerate() {
            assert_eq!(l.id as usize, i);
            for k in 0..3 {
                assert!(
                    l.position[k] >= s.bounds.min[k] && l.position[k] <= s.bounds.max[k],
                    "landmark {i} outside bounds"
                );
            }
            assert!((0.0..=1.0).contains(&l.quality));
        }
        assert_eq!(
            s.occluders.len(),
            cfg.wall_occluder_count + cfg.low_occluder_count
        );
        for o in &s.occluders {
            for k in 0..3 {
                assert!(o.aabb.min[k] >= s.bounds.min[k] - 1e-12);
                assert!(o.aabb.max[k] <= s.bounds.max[k] + 1e-12);
                assert!(o.aabb.min[k] < o.aabb.max[k]);
            }
        }
    }

    #[test]
    fn json_roundtrip_preserves_scene() {
        let s = gen_scene(&SceneConfig::default(), 3).unwrap();
        let back = Scene::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
    }

    /// Head-height cameras must see more than robot-height cameras on
    /// average; this is the structural property the whole benchmark leans
    /// on. Visibility here is pure ray-vs-box geometry (no grid, no
    /// frustum) so the check is independent of the occupancy code.
    #[test]
    fn head_height_sees_more_than_robot_height() {
        let cfg = SceneConfig::default();
        let scene = gen_scene(&cfg, 123).unwrap();
        let mut rng = crate::rng::derive_rng(9000, &[1]);
        let mut seen_robot = 0usize;
        let mut seen_head = 0usize;
        let mut positions = 0;
        while positions < 100 {
            let x = rng.gen_range(0.5..scene.bounds.max.x - 0.5);
            let y = rng.gen_range(0.5..scene.bounds.max.y - 0.5);
            let free = |p: &Vector3<f64>| !scene.occluders.iter().any(|o| o.aabb.contains(p));
            let robot = Vector3::new(x, y, 0.5);
            let head = Vector3::new(x, y, 1.6);
            if !free(&robot) || !free(&head) {
                continue;
            }
            positions += 1;
            for l in &scene.landmarks {
                let blocked = |from: &Vector3<f64>| {
                    scene.occluders.iter().any(|o| {
                        // Nudge the endpoints off the surfaces so a
                        // landmark's own mounting box does not count.
                        let dir = (l.position - from).normalize();
                        let a = from + dir * 1e-6;
                        let b = l.position - dir * 5e-3;
                        segment_hits_box(&a, &b, &o.aabb)
                    })
                };
                if !blocked(&robot) {
                    seen_robot += 1;
                }
                if !blocked(&head) {
                    seen_head += 1;
                }
            }
        }
        assert!(
            seen_robot < seen_head,
            "robot-height visibility {seen_robot} not below head-height {seen_head}"
        );
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SceneConfig::default();
        cfg.landmark_count = 0;
        assert!(gen_scene(&cfg, 1).is_err());
        let mut cfg = SceneConfig::default();
        cfg.elevated_fraction = 1.5;
        assert!(gen_scene(&cfg, 1).is_err());
        let mut cfg = SceneConfig::default();
        cfg.room_size = [1.0, 8.0, 3.0];
        assert!(gen_scene(&cfg, 1).is_err());
        let mut cfg = SceneConfig::default();
        cfg.wall_height_range = [3.0, 2.0];
        assert!(gen_scene(&cfg, 1).is_err());
    }
}
