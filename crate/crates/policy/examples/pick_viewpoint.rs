//! Score and select viewpoints in a generated room with every deployable
//! policy, then compare against the best-possible oracle sweep.
//!
//! Run with: cargo run -p vantage-policy --example pick_viewpoint

use nalgebra::Vector3;
use rand::Rng;
use vantage_core::geom::sample_viewpoints;
use vantage_core::mapping::{make_mapping_trajectory, simulate_mapping, MappingConfig};
use vantage_core::oracle::{NoiseConfig, RansacConfig};
use vantage_core::rng::derive_rng;
use vantage_core::scene::{build_occupancy, gen_scene, position_clear, visible, SceneConfig};
use vantage_core::CameraModel;
use vantage_policy::{best_possible, select, Policy, PolicyKind, SelectContext};

fn main() {
    // A mapped room.
    let scfg = SceneConfig {
        room_size: [7.0, 7.0, 2.5],
        landmark_count: 180,
        ..SceneConfig::default()
    };
    let scene = gen_scene(&scfg, 12).expect("scene");
    let grid = build_occupancy(&scene, 0.06).expect("grid");
    let cam = CameraModel::default();
    let mcfg = MappingConfig::default();
    let traj = make_mapping_trajectory(&scene, &grid, &mcfg, 13).expect("trajectory");
    let map = simulate_mapping(&scene, &grid, &traj, &cam, &mcfg, 14).expect("map");
    println!(
        "scene: {} landmarks, {} occluders; map: {} landmarks",
        scene.landmarks.len(),
        scene.occluders.len(),
        map.landmarks.len()
    );

    // A robot-height position with a clear view somewhere.
    let mut rng = derive_rng(15, &[0]);
    let b = &scene.bounds;
    let position = loop {
        let p = Vector3::new(
            rng.gen_range(b.min.x + 0.5..b.max.x - 0.5),
            rng.gen_range(b.min.y + 0.5..b.max.y - 0.5),
            0.5,
        );
        let clear = position_clear(&grid, &p, 0.25);
        let rich = clear
            && sample_viewpoints(&p, 12, 0.0, 0.0, rng.gen())
                .expect("probe viewpoints")
                .iter()
                .any(|c| {
                    map.landmarks
                        .iter()
                        .filter(|l| {
                            scene
                                .landmark_position(l.id)
                                .is_some_and(|t| visible(&grid, &c.pose, &cam, &t))
                        })
                        .count()
                        >= 12
                });
        if rich {
            break p;
        }
    };
    let candidates = sample_viewpoints(&position, 24, -10.0, 30.0, 16).expect("candidates");
    println!(
        "position ({:.2}, {:.2}, {:.2}), {} candidates",
        position.x,
        position.y,
        position.z,
        candidates.len()
    );

    // The oracle sweep all policies are judged against.
    let noise = NoiseConfig::default();
    let ransac = RansacConfig::default();
    let best = best_possible(&scene, &grid, &map, &cam, &candidates, &noise, &ransac, 17)
        .expect("best-possible sweep");
    println!(
        "best possible: candidate {} (yaw {:+7.2}) pos err {:.4} m rot err {:.4} deg",
        best.candidate.index, best.candidate.yaw_deg, best.result.pos_error_m, best.result.rot_error_deg
    );

    let mut ctx = SelectContext::new(position);
    ctx.next_waypoint = Some(position + Vector3::new(0.8, 0.3, 0.0));
    ctx.seed = Some(18);
    for kind in [PolicyKind::Forward, PolicyKind::Random, PolicyKind::Max, PolicyKind::Angle, PolicyKind::Fim] {
        let policy = Policy::new(kind, true);
        let picked = select(&policy, &map, &grid, &cam, &candidates, &ctx).expect("select");
        let run = &best.sweep[picked.candidate.index];
        println!(
            "{:>8}: candidate {:2} (yaw {:+7.2}) score {:10.3} -> oracle pos err {:8.4} m ({})",
            policy.label(),
            picked.candidate.index,
            picked.candidate.yaw_deg,
            picked.score,
            run.pos_error_m,
            if run.success { "ok" } else { "failed" }
        );
        assert!(
            best.result.pos_error_m <= run.pos_error_m,
            "oracle sweep must lower-bound every policy"
        );
    }
}
