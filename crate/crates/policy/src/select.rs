//! Candidate scoring and argmax selection.

use nalgebra::Vector3;
use rand::Rng;
use vantage_core::mapping::LandmarkMap;
use vantage_core::rng::{derive_rng, tags};
use vantage_core::{CameraModel, OccupancyGrid, ViewpointCandidate};
use vantage_learn::{Arch, ParamStore};

use crate::error::PolicyError;
use crate::kinds::{Policy, PolicyKind, Scalarization, ScoredCandidate};
use crate::learned::score_learned;
use crate::score::{score_angle, score_fim, score_max};
use crate::Result;

/// Per-call inputs that only some policies need. Construct with
/// [`SelectContext::new`] and fill in the fields the chosen policy uses.
#[derive(Debug, Clone, Copy)]
pub struct SelectContext<'a> {
    /// The robot's position estimate. With the odometry-noise knob off
    /// (the default in simulation) this is the true position.
    pub position_estimate: Vector3<f64>,
    /// Where the trajectory goes next; required by the forward policy.
    pub next_waypoint: Option<Vector3<f64>>,
    /// Stream seed; required by the random policy.
    pub seed: Option<u64>,
    /// Trained scorer; required by the learned policies.
    pub model: Option<&'a ParamStore>,
    /// Pixel-noise scale for information scoring.
    pub pixel_sigma: f64,
    pub scalarization: Scalarization,
}

impl<'a> SelectContext<'a> {
    pub fn new(position_estimate: Vector3<f64>) -> Self {
        SelectContext {
            position_estimate,
            next_waypoint: None,
            seed: None,
            model: None,
            pixel_sigma: 1.0,
            scalarization: Scalarization::default(),
        }
    }
}

/// Score every candidate under `policy`. Scores are policy-specific
/// units; ordering is what selection consumes. Errors on an empty
/// candidate list, on a policy missing its required context, and on the
/// evaluation-only best-possible strategy, which has no deployable score.
pub fn score_candidates(
    policy: &Policy,
    map: &LandmarkMap,
    grid: &OccupancyGrid,
    cam: &CameraModel,
    candidates: &[ViewpointCandidate],
    ctx: &SelectContext<'_>,
) -> Result<Vec<ScoredCandidate>> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    let occl = policy.occlusion_filter;
    let scores: Vec<f64> = match policy.kind {
        PolicyKind::BestPossible => {
            return Err(PolicyError::Usage(
                "best_possible requires oracle access and cannot be deployed; \
                 use the best_possible() sweep in evaluation"
                    .into(),
            ))
        }
        PolicyKind::Forward => {
            let target = ctx.next_waypoint.ok_or_else(|| {
                PolicyError::Usage("forward policy needs a next-waypoint direction".into())
            })?;
            let dir = target - ctx.position_estimate;
            let norm = dir.norm();
            if norm < 1e-9 {
                return Err(PolicyError::DegenerateGeometry(
                    "next waypoint coincides with the position estimate".into(),
                ));
            }
            let dir = dir / norm;
            candidates.iter().map(|c| c.pose.forward().dot(&dir)).collect()
        }
        PolicyKind::Random => {
            let seed = ctx
                .seed
                .ok_or_else(|| PolicyError::Usage("random policy needs an explicit seed".into()))?;
            let mut rng = derive_rng(seed, &[tags::POLICY_RANDOM]);
            let chosen = rng.gen_range(0..candidates.len());
            (0..candidates.len()).map(|i| f64::from(u8::from(i == chosen))).collect()
        }
        PolicyKind::Max => candidates
            .iter()
            .map(|c| score_max(map, &c.pose, cam, grid, occl) as f64)
            .collect(),
        PolicyKind::Angle => candidates
            .iter()
            .map(|c| score_angle(map, &c.pose, cam, grid, occl) as f64)
            .collect(),
        PolicyKind::Fim => candidates
            .iter()
            .map(|c| score_fim(map, &c.pose, cam, grid, occl, ctx.pixel_sigma, ctx.scalarization))
            .collect::<Result<_>>()?,
        PolicyKind::Mlp | PolicyKind::Vpt => {
            let store = ctx.model.ok_or_else(|| {
                PolicyError::Usage("learned policy needs a trained model".into())
            })?;
            let want = if policy.kind == PolicyKind::Mlp { Arch::Mlp } else { Arch::Vpt };
            if store.meta.arch != want {
                return Err(PolicyError::Schema(format!(
                    "policy {} given a {:?} model",
                    policy.kind, store.meta.arch
                )));
            }
            candidates
                .iter()
                .map(|c| score_learned(store, map, &c.pose, cam, grid, occl))
                .collect::<Result<_>>()?
        }
    };
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(PolicyError::NonFiniteScore(candidates[i].index));
        }
    }
    Ok(candidates
        .iter()
        .zip(scores)
        .map(|(c, score)| ScoredCandidate { candidate: *c, score })
        .collect())
}

/// Index (into the slice) of the score maximizer, ties broken by lowest
/// candidate index.
pub fn argmax(scored: &[ScoredCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scored.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) => {
                let better = s.score > scored[b].score
                    || (s.score == scored[b].score
                        && s.candidate.index < scored[b].candidate.index);
                if better {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Select the candidate `policy` scores highest. Deterministic given the
/// inputs (and the seed, for the random policy); ties break to the lowest
/// candidate index.
pub fn select(
    policy: &Policy,
    map: &LandmarkMap,
    grid: &OccupancyGrid,
    cam: &CameraModel,
    candidates: &[ViewpointCandidate],
    ctx: &SelectContext<'_>,
) -> Result<ScoredCandidate> {
    let scored = score_candidates(policy, map, grid, cam, candidates, ctx)?;
    let best = argmax(&scored).expect("scored list is nonempty");
    Ok(scored[best])
}
