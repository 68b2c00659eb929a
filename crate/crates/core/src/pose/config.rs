use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::detect::DetectorConfig;
use crate::geometry::{euler_decompose, AnatomicalFrame, CArmCamera, EulerLrIsAp, Frame, GeometryError, RigidTransform};
use crate::p3p::{ratio_grid, P3PConfig, RATIO_STEP};
use crate::Execution;

use super::ResidualNoise;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IliumStageConfig {
    pub ratio_start: f64,
    pub ratio_count: usize,
    pub epsilon: f64,
    pub pixel_tol: f64,
    /// Per-axis Euler limit (degrees) relative to the reference AP pose.
    pub euler_gate_deg: f64,
    /// Limit on the mean of the three smallest fragment-BB-to-detection distances (px).
    pub frag_reproj_gate_px: f64,
    pub min_frag_in_image: usize,
    pub match_gate_px: f64,
    pub min_matches: usize,
    /// Box bounds of the registration step: rotations about the C-arm
    /// axes (degrees) then translations (mm).
    pub registration_bounds: [f64; 6],
    /// Downsampling factor of the similarity grid.
    pub splat_downsample: usize,
    /// Splat standard deviation in downsampled pixels.
    pub splat_sigma: f64,
    /// Relative weight of one BB sample against one surface sample.
    pub splat_bb_weight: f64,
    /// Solve exactly between grid ratios (see [`P3PConfig::refine_brackets`]).
    /// Matters when a BB is hidden and only one true triple remains.
    pub refine_brackets: bool,
}

impl Default for IliumStageConfig {
    fn default() -> Self {
        Self {
            ratio_start: 0.6,
            ratio_count: 129,
            epsilon: 0.01,
            pixel_tol: 0.5,
            euler_gate_deg: 60.0,
            frag_reproj_gate_px: 200.0,
            min_frag_in_image: 3,
            match_gate_px: 10.5,
            min_matches: 2,
            registration_bounds: [15.0, 15.0, 30.0, 50.0, 50.0, 100.0],
            splat_downsample: 8,
            splat_sigma: 1.0,
            splat_bb_weight: 10.0,
            refine_brackets: true,
        }
    }
}

impl IliumStageConfig {
    pub fn p3p(&self) -> P3PConfig {
        P3PConfig {
            ratios: ratio_grid(self.ratio_start, self.ratio_count),
            epsilon: self.epsilon,
            t_bounds: [0.6, 1.0],
            pixel_tol: self.pixel_tol,
            refine_brackets: self.refine_brackets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FragmentStageConfig {
    /// Number of ratios centered on the reference ratio (odd).
    pub ratio_count: usize,
    pub ratio_step: f64,
    pub epsilon: f64,
    pub pixel_tol: f64,
    pub rot_gate_deg: f64,
    pub trans_gate_mm: f64,
    pub min_matches: usize,
    pub match_gate_px: f64,
    /// Detections farther than this from every reprojected fragment BB are dropped (px).
    pub distance_gate_px: f64,
    /// Weight (per mm²) on the squared translation of the relative motion.
    pub regularization_weight: f64,
    /// When set, the weight is scaled by `(σ̂ / noise_reference_px)²`, where
    /// σ̂ is the residual noise of the fits. Exact data then gets no pull
    /// toward zero motion. Without redundant matches the weight is used as
    /// given.
    pub noise_reference_px: Option<f64>,
    /// Solve exactly between grid ratios. With only three fragment BBs in
    /// view there is a single sub-constellation, and the grid alone misses
    /// the true pose when no ratio lands within the shape tolerance.
    pub refine_brackets: bool,
}

impl Default for FragmentStageConfig {
    fn default() -> Self {
        Self {
            ratio_count: 33,
            ratio_step: RATIO_STEP,
            epsilon: 0.01,
            pixel_tol: 0.5,
            rot_gate_deg: 60.0,
            trans_gate_mm: 30.0,
            min_matches: 3,
            match_gate_px: 10.5,
            distance_gate_px: 200.0,
            regularization_weight: 1e-2,
            noise_reference_px: Some(0.5),
            refine_brackets: true,
        }
    }
}

impl FragmentStageConfig {
    /// Regularization weight for fits with the given residual noise.
    pub fn effective_weight(&self, noise: &ResidualNoise) -> f64 {
        match (self.noise_reference_px, noise.variance()) {
            (Some(s0), Some(var)) if s0 > 0.0 => self.regularization_weight * var / (s0 * s0),
            _ => self.regularization_weight,
        }
    }

    /// Ratios centered on `r_hat`; values outside `[0.6, 1.0]` are dropped.
    pub fn ratios(&self, r_hat: f64) -> Vec<f64> {
        let half = (self.ratio_count / 2) as f64;
        (0..self.ratio_count)
            .map(|k| r_hat + (k as f64 - half) * self.ratio_step)
            .filter(|r| (0.6..=1.0).contains(r))
            .collect()
    }

    pub fn p3p(&self, r_hat: f64) -> P3PConfig {
        P3PConfig {
            ratios: self.ratios(r_hat),
            epsilon: self.epsilon,
            t_bounds: [0.6, 1.0],
            pixel_tol: self.pixel_tol,
            refine_brackets: self.refine_brackets,
        }
    }
}

/// Everything the single-view estimator can be tuned with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub ilium: IliumStageConfig,
    pub fragment: FragmentStageConfig,
    pub execution: Execution,
}

/// Canonical supine AP orientation of the APP frame relative to the C-arm:
/// AP along the depth axis, IS along image rows with superior up, LR along
/// image columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceApPose {
    /// APP to C-arm.
    pub app_to_carm: RigidTransform,
}

/// Fraction of the source-to-detector distance at which the reference pose
/// places the APP origin.
pub const REFERENCE_DEPTH_RATIO: f64 = 0.78;

impl ReferenceApPose {
    pub fn canonical(camera: &CArmCamera) -> Self {
        let p = camera.params();
        let col = Vector3::from(p.detector_col_dir);
        let row = Vector3::from(p.detector_row_dir);
        let depth = *camera.depth_axis();
        let r = Matrix3::from_columns(&[-col, -row, depth]);
        let origin = camera.source() + depth * (REFERENCE_DEPTH_RATIO * camera.source_to_detector());
        Self {
            app_to_carm: RigidTransform::from_rotation(&Rotation3::from_matrix(&r), origin.coords, Frame::App, Frame::CArm),
        }
    }

    /// Euler angles of a constellation pose's APP orientation relative to
    /// the reference.
    pub fn deviation(&self, pose: &RigidTransform, app: &AnatomicalFrame) -> Result<EulerLrIsAp, GeometryError> {
        let app_to_carm = pose.rotation() * app.app_to_volume().rotation();
        euler_decompose(&(self.app_to_carm.rotation().transpose() * app_to_carm))
    }

    /// Volume-to-C-arm pose that realizes the reference orientation.
    pub fn volume_pose(&self, app: &AnatomicalFrame) -> RigidTransform {
        self.app_to_carm
            .compose(&app.volume_to_app())
            .expect("APP frame chains into the reference pose")
    }
}
