use serde::{Deserialize, Serialize};
use vantage_core::ViewpointCandidate;

/// The viewpoint-selection strategies under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Face the next waypoint of the trajectory.
    Forward,
    /// Pick a candidate uniformly at random (seeded).
    Random,
    /// Maximize the number of visible landmarks.
    Max,
    /// Maximize the number of visible landmarks whose relative location
    /// falls inside the range they were mapped from.
    Angle,
    /// Maximize a scalarization of the summed Fisher information.
    Fim,
    /// Learned scorer over aggregated (histogram/heatmap) features.
    Mlp,
    /// Learned scorer over per-landmark tokens.
    Vpt,
    /// Oracle sweep: localize from every candidate and keep the best.
    /// Evaluation-only; it can never be deployed through [`select`].
    ///
    /// [`select`]: crate::select
    BestPossible,
}

impl PolicyKind {
    /// Whether this strategy needs ground-truth oracle access. Such a
    /// policy is an evaluation baseline, not a deployable selector.
    pub fn requires_oracle(self) -> bool {
        matches!(self, PolicyKind::BestPossible)
    }

    /// Whether this strategy scores with a trained model.
    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::Mlp | PolicyKind::Vpt)
    }

    /// Stable lowercase name used in configs, logs, and report rows.
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Forward => "forward",
            PolicyKind::Random => "random",
            PolicyKind::Max => "max",
            PolicyKind::Angle => "angle",
            PolicyKind::Fim => "fim",
            PolicyKind::Mlp => "mlp",
            PolicyKind::Vpt => "vpt",
            PolicyKind::BestPossible => "best_possible",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A strategy plus its visibility mode: with `occlusion_filter` on,
/// landmarks whose sight line is blocked by scene geometry do not count
/// as visible during scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub occlusion_filter: bool,
}

impl Policy {
    pub fn new(kind: PolicyKind, occlusion_filter: bool) -> Self {
        Policy { kind, occlusion_filter }
    }

    /// Name with the visibility mode appended, e.g. `max+occl`.
    pub fn label(&self) -> String {
        if self.occlusion_filter {
            format!("{}+occl", self.kind)
        } else {
            self.kind.to_string()
        }
    }
}

/// Scalar reduction applied to a summed 6x6 information matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    /// Sum of eigenvalues. Additive over disjoint landmark sets.
    #[default]
    Trace,
    /// log det(F + eps*I) with eps = 1e-9, so an empty view scores the
    /// finite floor value instead of negative infinity.
    LogDetDamped,
    /// Smallest eigenvalue (worst-constrained direction).
    MinEig,
}

/// A candidate together with the score a policy assigned it. Scores are
/// policy-specific units; only their order matters to selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: ViewpointCandidate,
    pub score: f64,
}
