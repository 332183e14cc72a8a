//! Saccaded search: boundary-chain interest points, coarse-to-fine hill
//! climbing on predicted scores, and the dense-scan baseline it is measured
//! against.

mod boundary;
mod climb;
mod detect;
mod field;
mod scorer;

pub use boundary::{boundary_chains, saccade_points, BoundaryChains, BoundaryParams};
pub use climb::{hill_climb, Climb, ClimbParams, EvalCache};
pub use detect::{detect, nms, DetectMode, DetectParams, DetectionRun};
pub use field::{dense_heatmap, quantize_heatmap, quantize_value, ScoreField};
pub use scorer::{AnalyticScorer, NetworkScorer, PatchScorer};

use crate::score::Point;

/// A located feature centroid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub channel: usize,
    pub point: Point,
    pub score: f32,
    /// Network evaluations spent producing this detection.
    pub evals_used: usize,
}
