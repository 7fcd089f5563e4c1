//! Offline diagnostic: replay stored dataset records as policy inputs and
//! measure how well count- and cone-based scores separate good viewpoints.

use std::collections::HashMap;

use vantage_harness::dataset::DatasetRecord;
use vantage_harness::{build_bundle, load_split, ExperimentConfig, Split};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg: ExperimentConfig = match args.get(1) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).expect("read config"))
            .expect("parse config"),
        None => ExperimentConfig::default(),
    };
    let master: u64 = 7240;
    let default_data = "/tmp/pilot/data".to_string();
    let data = std::path::Path::new(args.get(2).unwrap_or(&default_data));

    let shards = load_split(&cfg, master, Split::Train, data).expect("load train split");

    // cone_half_angle per (scene_index, landmark_id).
    let mut cone: HashMap<(usize, u32), f64> = HashMap::new();
    for si in 0..cfg.train_scene_count {
        let bundle = build_bundle(&cfg, master, Split::Train, si).expect("bundle");
        for lm in &bundle.map.landmarks {
            cone.insert((si, lm.id), lm.stats.cone_half_angle_deg);
        }
    }

    // Per-landmark discrimination of the cone flag.
    let (mut seen_vis, mut n_vis, mut seen_blk, mut n_blk) = (0u64, 0u64, 0u64, 0u64);
    for (_, records) in &shards {
        for r in records {
            for (f, &b) in r.features.iter().zip(&r.blocked) {
                if b {
                    n_blk += 1;
                    seen_blk += f.in_seen_range as u64;
                } else {
                    n_vis += 1;
                    seen_vis += f.in_seen_range as u64;
                }
            }
        }
    }
    let mut cone_vals: Vec<f64> = cone.values().copied().collect();
    cone_vals.sort_by(f64::total_cmp);
    let pct = |p: f64| cone_vals[((cone_vals.len() - 1) as f64 * p) as usize];
    eprintln!(
        "in_seen_range: P(|visible) = {:.3} (n={}), P(|blocked) = {:.3} (n={})",
        seen_vis as f64 / n_vis as f64,
        n_vis,
        seen_blk as f64 / n_blk as f64,
        n_blk
    );
    eprintln!(
        "cone_half_angle percentiles: p10 {:.1}  p50 {:.1}  p90 {:.1}",
        pct(0.1),
        pct(0.5),
        pct(0.9)
    );

    // Offline policy replay: group records by (scene, waypoint), score each
    // candidate from its stored features, check the stored label of the
    // argmax. Slack sweep recomputes the cone test from dir_deviation.
    let slacks = [5.0, 15.0, 25.0, 35.0, 45.0, 60.0];
    let mut wins: HashMap<String, u64> = HashMap::new();
    let mut n_wp = 0u64;
    for (meta, records) in &shards {
        let si = meta.scene_index;
        let mut by_wp: HashMap<u32, Vec<&DatasetRecord>> = HashMap::new();
        for r in records {
            by_wp.entry(r.waypoint_id).or_default().push(r);
        }
        for (_, cands) in by_wp.iter() {
            n_wp += 1;
            let mut tally = |name: &str, scores: Vec<f64>| {
                let mut best = 0usize;
                for i in 1..scores.len() {
                    if scores[i] > scores[best] {
                        best = i;
                    }
                }
                *wins.entry(name.to_string()).or_insert(0) += cands[best].label as u64;
            };
            tally("max", cands.iter().map(|r| r.features.len() as f64).collect());
            tally(
                "max+occl",
                cands
                    .iter()
                    .map(|r| r.blocked.iter().filter(|&&b| !b).count() as f64)
                    .collect(),
            );
            tally(
                "angle",
                cands
                    .iter()
                    .map(|r| r.features.iter().filter(|f| f.in_seen_range).count() as f64)
                    .collect(),
            );
            tally(
                "angle+occl",
                cands
                    .iter()
                    .map(|r| {
                        r.features
                            .iter()
                            .zip(&r.blocked)
                            .filter(|(f, &b)| f.in_seen_range && !b)
                            .count() as f64
                    })
                    .collect(),
            );
            for s in slacks {
                tally(
                    &format!("angle@{s:02}"),
                    cands
                        .iter()
                        .map(|r| {
                            r.features
                                .iter()
                                .filter(|f| {
                                    let half = cone[&(si, f.landmark_id)];
                                    f.dir_deviation_deg <= half + s
                                        && f.distance >= 0.8 * f.dist_min
                                        && f.distance <= 1.25 * f.dist_max
                                })
                                .count() as f64
                        })
                        .collect(),
                );
            }
            *wins.entry("best".into()).or_insert(0) += cands.iter().any(|r| r.label) as u64;
        }
    }
    let mut names: Vec<&String> = wins.keys().collect();
    names.sort();
    for name in names {
        println!("{:12} {:6.2}%", name, 100.0 * wins[name] as f64 / n_wp as f64);
    }
}
