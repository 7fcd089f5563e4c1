//! The experiment configuration: one JSON document that drives scene
//! generation, mapping, dataset generation, training, and evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vantage_core::features::{token_dim, AggregateShape};
use vantage_core::mapping::MappingConfig;
use vantage_core::oracle::{NoiseConfig, RansacConfig};
use vantage_core::scene::SceneConfig;
use vantage_core::CameraModel;
use vantage_learn::{Arch, TrainConfig};
use vantage_policy::{Policy, PolicyKind, Scalarization};

use crate::error::{HarnessError, Result};

/// One (position, orientation) recall threshold pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub pos_m: f64,
    pub rot_deg: f64,
}

impl ThresholdPair {
    pub fn new(pos_m: f64, rot_deg: f64) -> Self {
        ThresholdPair { pos_m, rot_deg }
    }

    /// Whether a localization outcome passes this threshold. Failures
    /// carry infinite errors and never pass.
    pub fn passes(&self, pos_error_m: f64, rot_error_deg: f64) -> bool {
        pos_error_m <= self.pos_m && rot_error_deg <= self.rot_deg
    }
}

/// The standard evaluation grid: distance thresholds with their
/// orientation companions, tight to loose.
pub fn default_thresholds() -> Vec<ThresholdPair> {
    vec![
        ThresholdPair::new(0.025, 1.0),
        ThresholdPair::new(0.05, 1.0),
        ThresholdPair::new(0.075, 1.0),
        ThresholdPair::new(0.1, 1.0),
        ThresholdPair::new(0.25, 2.0),
        ThresholdPair::new(1.0, 5.0),
    ]
}

/// The policy rows evaluated by default: heuristics in both occlusion
/// modes where the distinction matters, information scoring, and both
/// learned scorers.
pub fn default_policies() -> Vec<Policy> {
    vec![
        Policy::new(PolicyKind::Forward, false),
        Policy::new(PolicyKind::Random, false),
        Policy::new(PolicyKind::Max, false),
        Policy::new(PolicyKind::Max, true),
        Policy::new(PolicyKind::Angle, false),
        Policy::new(PolicyKind::Angle, true),
        Policy::new(PolicyKind::Fim, true),
        Policy::new(PolicyKind::Mlp, true),
        Policy::new(PolicyKind::Vpt, true),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Template for generated rooms; each scene varies only by seed.
    pub scene: SceneConfig,
    pub mapping: MappingConfig,
    pub cam: CameraModel,
    pub noise: NoiseConfig,
    pub ransac: RansacConfig,
    /// Occupancy grid resolution for occlusion and clearance queries.
    pub voxel_size_m: f64,
    pub train_scene_count: usize,
    pub test_scene_count: usize,
    pub waypoints_per_scene: usize,
    pub views_per_waypoint: usize,
    /// Camera height of the robot being localized (not the mapping rig).
    pub robot_height_m: f64,
    pub waypoint_clearance_m: f64,
    /// Pitch range for sampled candidate viewpoints, degrees.
    pub candidate_pitch_deg: [f64; 2],
    /// The threshold at which dataset labels are assigned.
    pub label_threshold: ThresholdPair,
    /// The recall grid reported by evaluation.
    pub eval_thresholds: Vec<ThresholdPair>,
    pub aggregate: AggregateShape,
    pub policies: Vec<Policy>,
    /// Pixel sigma assumed by the information-matrix policy.
    pub fim_pixel_sigma: f64,
    pub fim_scalarization: Scalarization,
    pub train_mlp: TrainConfig,
    pub train_vpt: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mapping = MappingConfig::default();
        let mut train_vpt = TrainConfig::default_for(Arch::Vpt);
        train_vpt.vpt.token_dim = token_dim(mapping.d_app);
        train_vpt.vpt.n_max = 48;
        ExperimentConfig {
            scene: SceneConfig::default(),
            mapping,
            cam: CameraModel::default(),
            noise: NoiseConfig::default(),
            ransac: RansacConfig::default(),
            voxel_size_m: 0.05,
            train_scene_count: 5,
            test_scene_count: 4,
            waypoints_per_scene: 100,
            views_per_waypoint: 50,
            robot_height_m: 0.5,
            waypoint_clearance_m: 0.2,
            candidate_pitch_deg: [-10.0, 30.0],
            label_threshold: ThresholdPair::new(0.1, 1.0),
            eval_thresholds: default_thresholds(),
            aggregate: AggregateShape::default(),
            policies: default_policies(),
            fim_pixel_sigma: 1.0,
            fim_scalarization: Scalarization::Trace,
            train_mlp: TrainConfig::default_for(Arch::Mlp),
            train_vpt,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::InvalidConfig(msg));
        if self.train_scene_count == 0 || self.test_scene_count == 0 {
            return fail("train_scene_count and test_scene_count must be positive".into());
        }
        if self.waypoints_per_scene == 0 || self.views_per_waypoint == 0 {
            return fail("waypoints_per_scene and views_per_waypoint must be positive".into());
        }
        if !(self.voxel_size_m > 0.0) || !(self.waypoint_clearance_m >= 0.0) {
            return fail("voxel_size_m must be positive and clearance non-negative".into());
        }
        if !(self.robot_height_m > 0.0 && self.robot_height_m < self.scene.room_size[2]) {
            return fail(format!(
                "robot_height_m {} must lie inside the room height {}",
                self.robot_height_m, self.scene.room_size[2]
            ));
        }
        let [lo, hi] = self.candidate_pitch_deg;
        if !(lo <= hi && lo >= -89.0 && hi <= 89.0) {
            return fail(format!("candidate_pitch_deg [{lo}, {hi}] must be ordered within [-89, 89]"));
        }
        if !(self.label_threshold.pos_m > 0.0 && self.label_threshold.rot_deg > 0.0) {
            return fail("label_threshold must be positive".into());
        }
        if self.eval_thresholds.is_empty() {
            return fail("eval_thresholds must not be empty".into());
        }
        for w in self.eval_thresholds.windows(2) {
            if !(w[0].pos_m <= w[1].pos_m && w[0].rot_deg <= w[1].rot_deg) {
                return fail("eval_thresholds must be sorted tight-to-loose in both components".into());
            }
        }
        if self.eval_thresholds.iter().any(|t| !(t.pos_m > 0.0 && t.rot_deg > 0.0)) {
            return fail("eval_thresholds must be positive".into());
        }
        if self.policies.is_empty() {
            return fail("policies must not be empty".into());
        }
        if self.policies.iter().any(|p| p.kind == PolicyKind::BestPossible) {
            return fail(
                "best_possible is computed implicitly from the oracle sweep; remove it from policies"
                    .into(),
            );
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.policies {
            if !seen.insert(p.label()) {
                return fail(format!("duplicate policy row {}", p.label()));
            }
        }
        if !(self.fim_pixel_sigma > 0.0) {
            return fail("fim_pixel_sigma must be positive".into());
        }
        if self.train_mlp.arch != Arch::Mlp || self.train_vpt.arch != Arch::Vpt {
            return fail("train_mlp.arch must be mlp and train_vpt.arch must be vpt".into());
        }
        if self.train_vpt.vpt.token_dim != token_dim(self.mapping.d_app) {
            return fail(format!(
                "train_vpt.vpt.token_dim {} does not match the mapping descriptor width (expected {})",
                self.train_vpt.vpt.token_dim,
                token_dim(self.mapping.d_app)
            ));
        }
        self.train_mlp.validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.train_vpt.validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Content hash of the configuration, recorded in manifests and shard
    /// sidecars so artifacts can be matched to the config that made them.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_and_roundtrips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        // An empty document means "all defaults".
        let empty: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, cfg);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut other = cfg.clone();
        other.waypoints_per_scene += 1;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = ExperimentConfig::default();
        c.test_scene_count = 0;
        assert!(matches!(c.validate(), Err(HarnessError::InvalidConfig(_))));

        let mut c = ExperimentConfig::default();
        c.robot_height_m = 99.0;
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.eval_thresholds.reverse();
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.policies.push(Policy::new(PolicyKind::BestPossible, false));
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.policies.push(c.policies[0]);
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.train_vpt.vpt.token_dim = 7;
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.candidate_pitch_deg = [30.0, -10.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn thresholds_pass_checks_both_components() {
        let t = ThresholdPair::new(0.1, 1.0);
        assert!(t.passes(0.1, 1.0));
        assert!(!t.passes(0.11, 0.5));
        assert!(!t.passes(0.05, 1.01));
        assert!(!t.passes(f64::INFINITY, f64::INFINITY));
    }
}
