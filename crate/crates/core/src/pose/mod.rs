//! Single-view estimation of the ilium and fragment constellation poses and
//! the relative fragment motion.
//!
//! Both stages enumerate 3-BB correspondences through the depth-sampled P3P
//! solver and prune them: the ilium stage against the reference AP
//! orientation and the preoperative fragment position, the fragment stage
//! against the plausible range of surgical motion relative to the ilium.

mod config;
mod matching;
mod pipeline;
mod prune;
mod report;
mod similarity;

pub use config::{FragmentStageConfig, IliumStageConfig, PipelineConfig, ReferenceApPose, REFERENCE_DEPTH_RATIO};
pub use matching::{match_by_reprojection, mean_distance, refine_pose, BbMatch, RefineOptions, Regularization, ResidualNoise};
pub use pipeline::{
    estimate_fragment, estimate_from_detections, estimate_ilium, estimate_single_view, EstimateStatus,
    FragmentPoseEstimate, Priors, StageOutcome, StageTimings, DEFAULT_SPLAT_SAMPLES,
};
pub use prune::{
    count_max_candidates, count_max_candidates_for, general_prune, prune_ilium_anatomical, PoseCandidate,
    PruneOutcome, StageCounts,
};
pub use report::{status_from_str, status_str, transform_from_json, transform_json, EULER_CONVENTION};
pub use similarity::{splat_similarity, stable_argmin, SplatModel, SplatTarget};

use thiserror::Error;

use crate::detect::DetectError;
use crate::p3p::P3PError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("need at least 3 detections, got {0}")]
    TooFewDetections(usize),
    #[error("need at least 2 matches, got {0}")]
    InsufficientMatches(usize),
    #[error(transparent)]
    P3P(#[from] P3PError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}
