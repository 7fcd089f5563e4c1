//! Model training: load the train shards, balance the classes, freeze
//! normalization ranges, and fit the requested architecture.

use std::path::{Path, PathBuf};

use vantage_core::features::{
    aggregate, aggregate_schema, mlp_input, token_schema, NormRanges, PerLandmarkFeature,
};
use vantage_learn::{tokens_from_features, train, Arch, Dataset, ParamStore, TrainReport};

use crate::balance::balance_indices;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::gen::load_split;
use crate::seeds::{balance_seed, train_seed, Split};

/// File stem used for an architecture's artifacts under `out/models/`.
pub fn arch_name(arch: Arch) -> &'static str {
    match arch {
        Arch::Mlp => "mlp",
        Arch::Vpt => "vpt",
    }
}

fn arch_tag(arch: Arch) -> u64 {
    match arch {
        Arch::Mlp => 0,
        Arch::Vpt => 1,
    }
}

/// Path of a trained model's parameter store under `out_dir`.
pub fn store_path(out_dir: &Path, arch: Arch) -> PathBuf {
    out_dir.join("models").join(format!("{}.store", arch_name(arch)))
}

/// The balanced training corpus: occlusion-filtered feature rows and their
/// labels, plus normalization ranges frozen over exactly these examples.
pub struct TrainingCorpus {
    pub features: Vec<Vec<PerLandmarkFeature>>,
    pub labels: Vec<bool>,
    pub ranges: NormRanges,
}

/// Collect the balanced corpus from the train split. Models see the same
/// occlusion-filtered landmark rows their deployed policies will compute,
/// and both architectures share one corpus (and one seed for the
/// balancing shuffle), so they train on the same examples.
pub fn build_corpus(cfg: &ExperimentConfig, master: u64, data_dir: &Path) -> Result<TrainingCorpus> {
    let shards = load_split(cfg, master, Split::Train, data_dir)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (_, records) in &shards {
        for r in records {
            features.push(r.features_for(true));
            labels.push(r.label);
        }
    }
    let kept = balance_indices(&labels, balance_seed(master))?;
    let features: Vec<_> = kept.iter().map(|&i| features[i].clone()).collect();
    let labels: Vec<_> = kept.iter().map(|&i| labels[i]).collect();
    let ranges = NormRanges::from_corpus(&features, &cfg.aggregate)?;
    Ok(TrainingCorpus { features, labels, ranges })
}

/// Train one architecture on the corpus and persist its parameter store
/// and training report. Returns the store path and the report.
pub fn train_arch(
    cfg: &ExperimentConfig,
    master: u64,
    arch: Arch,
    corpus: &TrainingCorpus,
    out_dir: &Path,
) -> Result<(PathBuf, TrainReport)> {
    let tc = match arch {
        Arch::Mlp => cfg.train_mlp.clone(),
        Arch::Vpt => cfg.train_vpt.clone(),
    };
    if tc.arch != arch {
        return Err(HarnessError::InvalidConfig(format!(
            "train config for {} names a different architecture",
            arch_name(arch)
        )));
    }
    let (dataset, schema) = match arch {
        Arch::Mlp => {
            let inputs: Vec<Vec<f64>> = corpus
                .features
                .iter()
                .map(|f| mlp_input(&aggregate(f, &cfg.aggregate, &corpus.ranges), &corpus.ranges))
                .collect();
            (
                Dataset::Aggregate { inputs, labels: corpus.labels.clone() },
                aggregate_schema(&cfg.aggregate),
            )
        }
        Arch::Vpt => {
            let examples = corpus
                .features
                .iter()
                .zip(&corpus.labels)
                .map(|(f, &label)| tokens_from_features(f, &corpus.ranges, &tc.vpt, label))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            (Dataset::Tokens { examples }, token_schema(cfg.mapping.d_app))
        }
    };
    let (params, report) = train(&dataset, &tc, train_seed(master, arch_tag(arch)))?;
    let store = ParamStore::new(
        params,
        schema,
        corpus.ranges.clone(),
        (cfg.label_threshold.pos_m, cfg.label_threshold.rot_deg),
        tc,
    );
    let models_dir = out_dir.join("models");
    std::fs::create_dir_all(&models_dir)?;
    let path = store_path(out_dir, arch);
    store.save(&path)?;
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| HarnessError::Generation(format!("serializing train report: {e}")))?;
    std::fs::write(
        models_dir.join(format!("{}_train_report.json", arch_name(arch))),
        report_json + "\n",
    )?;
    Ok((path, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vantage_core::features::{token_dim, AggregateShape};
    use vantage_learn::VptConfig;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            scene: vantage_core::scene::SceneConfig {
                room_size: [6.0, 6.0, 2.5],
                landmark_count: 90,
                wall_occluder_count: 2,
                low_occluder_count: 4,
                ..Default::default()
            },
            mapping: vantage_core::mapping::MappingConfig {
                waypoint_count: 24,
                ..Default::default()
            },
            voxel_size_m: 0.08,
            train_scene_count: 2,
            test_scene_count: 1,
            waypoints_per_scene: 4,
            views_per_waypoint: 6,
            ..ExperimentConfig::default()
        };
        cfg.train_mlp.epochs = 3;
        cfg.train_mlp.hidden = (16, 16);
        cfg.train_vpt.epochs = 2;
        cfg.train_vpt.vpt = VptConfig {
            token_dim: token_dim(cfg.mapping.d_app),
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            n_blocks: 1,
            n_max: 24,
        };
        cfg
    }

    #[test]
    fn corpus_is_balanced_and_deterministic() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        crate::gen::gen_split(&cfg, 7, Split::Train, dir.path()).unwrap();
        let corpus = build_corpus(&cfg, 7, dir.path()).unwrap();
        let pos = corpus.labels.iter().filter(|&&l| l).count();
        assert_eq!(pos * 2, corpus.labels.len(), "corpus must be class balanced");
        assert!(!corpus.features.is_empty());
        let again = build_corpus(&cfg, 7, dir.path()).unwrap();
        assert_eq!(corpus.labels, again.labels);
        assert_eq!(corpus.features, again.features);
    }

    #[test]
    fn both_architectures_train_and_persist_loadable_stores() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        crate::gen::gen_split(&cfg, 7, Split::Train, dir.path()).unwrap();
        let corpus = build_corpus(&cfg, 7, dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        for arch in [Arch::Mlp, Arch::Vpt] {
            let (path, report) = train_arch(&cfg, 7, arch, &corpus, out.path()).unwrap();
            assert!(report.n_train > 0 && report.n_val > 0);
            assert!(report.best_val_accuracy.is_finite());
            let store = ParamStore::load(&path).unwrap();
            assert_eq!(store.meta.arch, arch);
            assert_eq!(store.meta.threshold_pos_m, cfg.label_threshold.pos_m);
            // The deployed scorer accepts the store against live features.
            let expected = match arch {
                Arch::Mlp => aggregate_schema(&AggregateShape::default()),
                Arch::Vpt => token_schema(cfg.mapping.d_app),
            };
            store.check_schema(&expected).unwrap();
            let probe = vantage_policy::score_features(&store, &corpus.features[0]).unwrap();
            assert!((0.0..=1.0).contains(&probe));
        }
        assert!(out.path().join("models/mlp_train_report.json").exists());
        assert!(out.path().join("models/vpt_train_report.json").exists());
    }

    #[test]
    fn training_is_byte_deterministic() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        crate::gen::gen_split(&cfg, 9, Split::Train, dir.path()).unwrap();
        let corpus = build_corpus(&cfg, 9, dir.path()).unwrap();
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        let (pa, _) = train_arch(&cfg, 9, Arch::Mlp, &corpus, out_a.path()).unwrap();
        let (pb, _) = train_arch(&cfg, 9, Arch::Mlp, &corpus, out_b.path()).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }
}
