//! End-to-end exercise of the `vantage` binary: every subcommand runs
//! against a miniature configuration, producing real artifacts in a
//! temporary run directory.

use std::path::Path;
use std::process::Command;

use vantage_core::features::token_dim;
use vantage_harness::config::ExperimentConfig;
use vantage_learn::VptConfig;
use vantage_policy::{Policy, PolicyKind};

const BIN: &str = env!("CARGO_BIN_EXE_vantage");

fn micro_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        scene: vantage_core::scene::SceneConfig {
            room_size: [6.0, 6.0, 2.5],
            landmark_count: 90,
            wall_occluder_count: 2,
            low_occluder_count: 4,
            ..Default::default()
        },
        mapping: vantage_core::mapping::MappingConfig { waypoint_count: 24, ..Default::default() },
        voxel_size_m: 0.08,
        train_scene_count: 2,
        test_scene_count: 1,
        waypoints_per_scene: 3,
        views_per_waypoint: 6,
        policies: vec![
            Policy::new(PolicyKind::Forward, false),
            Policy::new(PolicyKind::Random, false),
            Policy::new(PolicyKind::Max, true),
            Policy::new(PolicyKind::Angle, true),
            Policy::new(PolicyKind::Fim, true),
            Policy::new(PolicyKind::Mlp, true),
            Policy::new(PolicyKind::Vpt, true),
        ],
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

fn vantage(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn expect_success(args: &[&str]) -> String {
    let out = vantage(args);
    assert!(
        out.status.success(),
        "vantage {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn expect_exit(args: &[&str], code: i32) {
    let out = vantage(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "vantage {:?}\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&micro_config()).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out_dir = tmp.path().join("run");
    let out = out_dir.to_str().unwrap();

    expect_success(&["--help"]);

    // Before any stage has run, eval and report are config errors.
    expect_exit(&["eval", "--config", &cfg, "--seed", "5", "--out", out], 2);
    expect_exit(&["report", "--config", &cfg, "--seed", "5", "--out", out], 2);

    let text = expect_success(&[
        "gen-scene", "--config", &cfg, "--seed", "5", "--out", out, "--split", "test",
    ]);
    assert!(text.contains("scene test-0"));
    assert!(out_dir.join("scenes/test-0.scene.json").exists());
    assert!(out_dir.join("manifest-gen-scene.json").exists());

    let text = expect_success(&[
        "map", "--config", &cfg, "--seed", "5", "--out", out, "--split", "test",
    ]);
    assert!(text.contains("mapped"));
    assert!(out_dir.join("scenes/test-0.map.json").exists());

    expect_success(&["gen-data", "--config", &cfg, "--seed", "5", "--out", out]);
    for shard in ["data/train/train-0.bin", "data/train/train-1.bin", "data/test/test-0.bin"] {
        assert!(out_dir.join(shard).exists(), "missing {shard}");
        assert!(out_dir.join(shard).with_extension("json").exists());
    }

    // Training with no data in a different directory is a config error.
    let empty = tmp.path().join("empty");
    expect_exit(
        &["train", "--config", &cfg, "--seed", "5", "--out", empty.to_str().unwrap()],
        2,
    );

    expect_success(&["train", "--config", &cfg, "--seed", "5", "--out", out]);
    assert!(out_dir.join("models/mlp.store").exists());
    assert!(out_dir.join("models/vpt.store").exists());
    assert!(out_dir.join("models/mlp_train_report.json").exists());

    let text = expect_success(&["eval", "--config", &cfg, "--seed", "5", "--out", out]);
    assert!(text.contains("| best_possible |"), "eval prints the recall table:\n{text}");
    assert!(out_dir.join("eval_report.json").exists());
    assert!(out_dir.join("timing.json").exists());

    let text = expect_success(&[
        "report", "--config", &cfg, "--seed", "5", "--out", out, "--format", "csv",
    ]);
    assert!(text.starts_with("policy,pos_m,rot_deg,recall_pct"));
    assert!(out_dir.join("report.csv").exists());
    expect_exit(
        &["report", "--config", &cfg, "--seed", "5", "--out", out, "--format", "yaml"],
        2,
    );

    // A different seed refuses the stored report? No: the report checks the
    // config hash; the seed lives inside the report itself. A different
    // config is refused.
    let mut other = micro_config();
    other.views_per_waypoint = 7;
    let other_path = tmp.path().join("other.json");
    std::fs::write(&other_path, serde_json::to_string(&other).unwrap()).unwrap();
    expect_exit(
        &["report", "--config", other_path.to_str().unwrap(), "--seed", "5", "--out", out],
        2,
    );

    // Invalid JSON and invalid values exit 2 before any work happens.
    let broken = tmp.path().join("broken.json");
    std::fs::write(&broken, "{nope").unwrap();
    expect_exit(&["gen-data", "--config", broken.to_str().unwrap(), "--out", out], 2);
    let mut bad = micro_config();
    bad.waypoints_per_scene = 0;
    let bad_path = tmp.path().join("bad.json");
    std::fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
    expect_exit(&["gen-data", "--config", bad_path.to_str().unwrap(), "--out", out], 2);
}

#[test]
fn pipeline_reruns_reproduce_artifacts_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let mut digests: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for run in ["a", "b"] {
        let out_dir = tmp.path().join(run);
        let out = out_dir.to_str().unwrap();
        expect_success(&["gen-data", "--config", &cfg, "--seed", "11", "--out", out]);
        expect_success(&["train", "--config", &cfg, "--seed", "11", "--out", out]);
        expect_success(&["eval", "--config", &cfg, "--seed", "11", "--out", out]);
        let files = [
            "data/train/train-0.bin",
            "data/train/train-1.bin",
            "data/test/test-0.bin",
            "models/mlp.store",
            "models/vpt.store",
            "eval_report.json",
        ];
        digests.push(
            files
                .iter()
                .map(|f| (f.to_string(), std::fs::read(out_dir.join(f)).unwrap()))
                .collect(),
        );
    }
    for ((name, a), (_, b)) in digests[0].iter().zip(&digests[1]) {
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}
