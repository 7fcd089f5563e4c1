//! Dataset generation: sweep every candidate viewpoint at every waypoint,
//! record features and oracle outcomes, and persist per-scene shards.

use std::path::Path;

use vantage_core::features::per_landmark_features;
use vantage_core::geom::sample_viewpoints;
use vantage_core::oracle::localize;
use vantage_policy::candidate_oracle_rng;

use crate::config::ExperimentConfig;
use crate::dataset::{record_layout_doc, write_shard, DatasetRecord, ShardMeta, SHARD_VERSION};
use crate::error::{HarnessError, Result};
use crate::seeds::Split;
use crate::world::{build_bundle, sample_waypoints, scene_id, waypoint_seeds, SceneBundle};

/// Generate the records of one scene: `waypoints_per_scene` waypoints, each
/// swept by `views_per_waypoint` candidates. The oracle stream of candidate
/// `i` at a waypoint is derived exactly as the evaluation sweep derives it,
/// so stored errors pair with evaluation bit-for-bit.
pub fn gen_scene_records(cfg: &ExperimentConfig, bundle: &SceneBundle) -> Result<Vec<DatasetRecord>> {
    let waypoints = sample_waypoints(cfg, bundle)?;
    let seeds = waypoint_seeds(bundle, waypoints.len());
    let mut records = Vec::with_capacity(waypoints.len() * cfg.views_per_waypoint);
    for (w, (wp, &wp_seed)) in waypoints.iter().zip(&seeds).enumerate() {
        let candidates = sample_viewpoints(
            wp,
            cfg.views_per_waypoint,
            cfg.candidate_pitch_deg[0],
            cfg.candidate_pitch_deg[1],
            wp_seed,
        )?;
        for c in &candidates {
            let unfiltered = per_landmark_features(&bundle.map, &c.pose, &bundle.cam, &bundle.grid, false);
            let filtered = per_landmark_features(&bundle.map, &c.pose, &bundle.cam, &bundle.grid, true);
            // Both lists follow map order, so a single forward walk marks
            // exactly the rows the occlusion filter dropped.
            let mut blocked = vec![true; unfiltered.len()];
            let mut j = 0usize;
            for (i, f) in unfiltered.iter().enumerate() {
                if j < filtered.len() && filtered[j].landmark_id == f.landmark_id {
                    blocked[i] = false;
                    j += 1;
                }
            }
            debug_assert_eq!(j, filtered.len());

            let mut rng = candidate_oracle_rng(wp_seed, c.index);
            let run = localize(
                &bundle.grid,
                &bundle.scene,
                &bundle.map,
                &c.pose,
                &bundle.cam,
                &cfg.noise,
                &cfg.ransac,
                &mut rng,
            );
            records.push(DatasetRecord {
                waypoint_id: w as u32,
                candidate_index: c.index as u32,
                position: [wp.x, wp.y, wp.z],
                yaw_deg: c.yaw_deg,
                pitch_deg: c.pitch_deg,
                pos_error_m: run.pos_error_m,
                rot_error_deg: run.rot_error_deg,
                success: run.success,
                label: cfg.label_threshold.passes(run.pos_error_m, run.rot_error_deg),
                features: unfiltered,
                blocked,
            });
        }
    }
    Ok(records)
}

/// Outcome of generating one scene's shard.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardOutcome {
    pub meta: ShardMeta,
    /// True when a previous matching shard was reused instead of rebuilt.
    pub reused: bool,
}

/// Generate (or reuse) every shard of a split under `data_dir/<split>/`.
pub fn gen_split(
    cfg: &ExperimentConfig,
    master: u64,
    split: Split,
    data_dir: &Path,
) -> Result<Vec<ShardOutcome>> {
    let dir = data_dir.join(split.name());
    std::fs::create_dir_all(&dir)?;
    let scene_count = match split {
        Split::Train => cfg.train_scene_count,
        Split::Test => cfg.test_scene_count,
    };
    let config_hash = cfg.hash();
    let mut out = Vec::with_capacity(scene_count);
    for index in 0..scene_count {
        let id = scene_id(split, index);
        if let Ok(meta) = ShardMeta::load(&dir, &id) {
            if meta.matches(&config_hash, master, &dir) {
                log::info!("shard {id}: reusing existing data");
                out.push(ShardOutcome { meta, reused: true });
                continue;
            }
            log::info!("shard {id}: stale (config or seed changed), regenerating");
        }
        let bundle = build_bundle(cfg, master, split, index)?;
        let records = gen_scene_records(cfg, &bundle)?;
        let data_bytes = write_shard(&dir, &id, cfg.mapping.d_app, &records)?;
        let meta = ShardMeta {
            format_version: SHARD_VERSION,
            scene_id: id.clone(),
            split,
            scene_index: index,
            scene_seed: bundle.seed,
            master_seed: master,
            config_hash: config_hash.clone(),
            d_app: cfg.mapping.d_app,
            record_count: records.len() as u64,
            waypoints: cfg.waypoints_per_scene,
            views_per_waypoint: cfg.views_per_waypoint,
            label_threshold: cfg.label_threshold,
            data_file: format!("{id}.bin"),
            data_bytes,
            record_layout: record_layout_doc(cfg.mapping.d_app),
        };
        meta.save(&dir)?;
        out.push(ShardOutcome { meta, reused: false });
    }
    Ok(out)
}

/// Load every shard of a split, verifying it matches the configuration.
pub fn load_split(
    cfg: &ExperimentConfig,
    master: u64,
    split: Split,
    data_dir: &Path,
) -> Result<Vec<(ShardMeta, Vec<DatasetRecord>)>> {
    let dir = data_dir.join(split.name());
    let scene_count = match split {
        Split::Train => cfg.train_scene_count,
        Split::Test => cfg.test_scene_count,
    };
    let config_hash = cfg.hash();
    let mut out = Vec::with_capacity(scene_count);
    for index in 0..scene_count {
        let id = scene_id(split, index);
        let meta = ShardMeta::load(&dir, &id).map_err(|e| {
            HarnessError::InvalidConfig(format!(
                "missing dataset shard {id}; run gen-data first ({e})"
            ))
        })?;
        if !meta.matches(&config_hash, master, &dir) {
            return Err(HarnessError::InvalidConfig(format!(
                "dataset shard {id} was generated with a different config or seed; re-run gen-data"
            )));
        }
        let (d_app, records) = crate::dataset::read_shard(&meta.data_path(&dir))?;
        if d_app != cfg.mapping.d_app || records.len() as u64 != meta.record_count {
            return Err(HarnessError::Generation(format!(
                "shard {id} does not match its sidecar"
            )));
        }
        out.push((meta, records));
    }
    Ok(out)
}
