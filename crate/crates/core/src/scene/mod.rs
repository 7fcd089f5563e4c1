//! Synthetic indoor scenes: a rectangular room with box occluders and
//! point landmarks attached to surfaces.

mod gen;
mod grid;

pub use gen::{gen_scene, SceneConfig};
pub use grid::{build_occupancy, position_clear, ray_occluded, visible, OccupancyGrid};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Axis-aligned box, `min` strictly below `max` on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Aabb { min, max }
    }

    /// Half-open membership test: `min <= p < max` per axis, so boxes that
    /// share a face never claim the same point twice.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] < self.max[k])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }
}

/// What an occluder stands in for; `Wall` boxes reach head height and
/// above, `Low` boxes are furniture-scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderKind {
    Low,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occluder {
    pub aabb: Aabb,
    pub kind: OccluderKind,
}

/// A point landmark with a matchability score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: u32,
    pub position: Vector3<f64>,
    pub quality: f64,
}

/// A generated scene. `bounds.min` is always the origin corner; landmark
/// ids are dense `0..landmarks.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bounds: Aabb,
    pub occluders: Vec<Occluder>,
    pub landmarks: Vec<Landmark>,
    pub seed: u64,
}

impl Scene {
    /// Landmark positions indexed by id. Ids are dense, so this is a plain
    /// vector lookup.
    pub fn landmark_position(&self, id: u32) -> Option<Vector3<f64>> {
        self.landmarks.get(id as usize).map(|l| l.position)
    }

    pub fn landmark_quality(&self, id: u32) -> Option<f64> {
        self.landmarks.get(id as usize).map(|l| l.quality)
    }

    pub fn to_json(&self) -> Result<String> {
        let schema = schema::SceneFile::from_scene(self);
        Ok(serde_json::to_string_pretty(&schema)?)
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        let schema: schema::SceneFile = serde_json::from_str(text)?;
        schema.into_scene()
    }
}

/// Versioned on-disk representation of [`Scene`]. Vectors are written as
/// `[x, y, z]` arrays so the format does not depend on linear-algebra
/// library internals.
mod schema {
    use super::*;

    pub const SCENE_SCHEMA_VERSION: u32 = 1;

    #[derive(Serialize, Deserialize)]
    pub struct SceneFile {
        pub schema_version: u32,
        pub seed: u64,
        pub bounds_min: [f64; 3],
        pub bounds_max: [f64; 3],
        pub occluders: Vec<OccluderRec>,
        pub landmarks: Vec<LandmarkRec>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct OccluderRec {
        pub min: [f64; 3],
        pub max: [f64; 3],
        pub kind: OccluderKind,
    }

    #[derive(Serialize, Deserialize)]
    pub struct LandmarkRec {
        pub id: u32,
        pub position: [f64; 3],
        pub quality: f64,
    }

    fn v(a: [f64; 3]) -> Vector3<f64> {
        Vector3::new(a[0], a[1], a[2])
    }

    fn a(v: &Vector3<f64>) -> [f64; 3] {
        [v.x, v.y, v.z]
    }

    impl SceneFile {
        pub fn from_scene(s: &Scene) -> Self {
            SceneFile {
                schema_version: SCENE_SCHEMA_VERSION,
                seed: s.seed,
                bounds_min: a(&s.bounds.min),
                bounds_max: a(&s.bounds.max),
                occluders: s
                    .occluders
                    .iter()
                    .map(|o| OccluderRec { min: a(&o.aabb.min), max: a(&o.aabb.max), kind: o.kind })
                    .collect(),
                landmarks: s
                    .landmarks
                    .iter()
                    .map(|l| LandmarkRec { id: l.id, position: a(&l.position), quality: l.quality })
                    .collect(),
            }
        }

        pub fn into_scene(self) -> Result<Scene> {
            if self.schema_version != SCENE_SCHEMA_VERSION {
                return Err(CoreError::Serialization(format!(
                    "unsupported scene schema version {}",
                    self.schema_version
                )));
            }
            let scene = Scene {
                bounds: Aabb::new(v(self.bounds_min), v(self.bounds_max)),
                occluders: self
                    .occluders
                    .into_iter()
                    .map(|o| Occluder { aabb: Aabb::new(v(o.min), v(o.max)), kind: o.kind })
                    .collect(),
                landmarks: self
                    .landmarks
                    .into_iter()
                    .map(|l| Landmark { id: l.id, position: v(l.position), quality: l.quality })
                    .collect(),
                seed: self.seed,
            };
            for (i, l) in scene.landmarks.iter().enumerate() {
                if l.id as usize != i {
                    return Err(CoreError::Serialization("landmark ids must be dense".into()));
                }
            }
            Ok(scene)
        }
    }
}
