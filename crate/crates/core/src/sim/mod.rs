//! Synthetic fluoroscopy: pelvis-like scenes with implanted BBs, fragment
//! motion, C-arm views, detection noise, rendering and error evaluation.

mod eval;
mod io;
mod noise;
mod render;
mod scene;
mod trial;
mod views;

pub use eval::{evaluate, evaluate_delta, pose_error, summary_csv, summary_stats, summary_table, ErrorReport, SummaryRow, ERROR_COLUMNS};
pub use io::{read_cameras_json, write_cameras_json, write_simulation, write_truth_csv, CameraSet};
pub use noise::{observe_view, FalsePlacement, ForcedOcclusion, NoiseModel, TruthDetection, TruthKind, ViewObservation};
pub use render::{bb_radius_px, render_disk_phantom, render_view};
pub use scene::{
    apply_fragment_motion, generate_scene, sample_motion, MotionConfig, Scene, SceneConfig, ACETABULUM_PATCH,
    SCENE_SCHEMA_VERSION,
};
pub use trial::{
    derive_seed, priors_from, recon_accuracy, reconstruct_views, run_batch, run_trial, run_trial_with, seed_range,
    simulate_trial, trial_rng, TrialConfig, TrialInputs, TrialResult,
};
pub use views::{
    estimation_camera, perturb_camera, recon_cameras, recon_cameras_at, CameraError, view_camera, EstimationViewRange, ViewTilt, RECON_TILTS,
};

use thiserror::Error;

use crate::detect::DetectError;
use crate::geometry::GeometryError;
use crate::pose::EstimateStatus;
use crate::recon::ReconError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene constraints could not be satisfied")]
    ConstraintUnsatisfiable,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported scene schema version {0}")]
    SchemaVersion(u32),
    #[error("json: {0}")]
    Json(String),
    #[error("io: {0}")]
    Io(String),
    #[error("estimate failed: {0:?}")]
    EstimateFailed(EstimateStatus),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}
