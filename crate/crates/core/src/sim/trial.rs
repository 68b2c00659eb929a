use std::time::Instant;

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_fragment_motion, estimation_camera, evaluate, generate_scene, observe_view, recon_cameras_at, render_view,
    sample_motion, ErrorReport, EstimationViewRange, ForcedOcclusion, NoiseModel, Scene, SceneConfig, SimError,
    ViewObservation, ViewTilt, RECON_TILTS,
};
use crate::detect::{detect_image, Grid};
use crate::pose::{estimate_from_detections, FragmentPoseEstimate, PipelineConfig, Priors};
use crate::recon::{reconstruct, ReconConfig, Reconstruction};
use crate::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub scene: SceneConfig,
    pub noise: NoiseModel,
    pub pipeline: PipelineConfig,
    pub estimation_view: EstimationViewRange,
    pub recon_tilts: [ViewTilt; 3],
    /// Per-axis jitter of the reconstruction view orientations (degrees).
    pub recon_view_jitter_deg: f64,
    pub recon: ReconConfig,
    /// Detect BBs in the rendered postoperative image instead of using the
    /// truth table.
    pub detect_from_image: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            noise: NoiseModel::none(),
            pipeline: PipelineConfig::default(),
            estimation_view: EstimationViewRange::default(),
            recon_tilts: RECON_TILTS,
            recon_view_jitter_deg: 3.0,
            recon: ReconConfig::default(),
            detect_from_image: false,
        }
    }
}

/// RNG for one purpose within a trial; streams never overlap.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// All simulated inputs of a trial.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    pub scene: Scene,
    pub recon_views: [ViewObservation; 3],
    pub estimation_view: ViewObservation,
    pub estimation_image: Grid,
}

/// Generate the scene, true motion, views and postoperative image for `seed`.
/// `hook` may edit the postoperative observation before rendering.
pub fn simulate_trial<H>(seed: u64, config: &TrialConfig, forced: &ForcedOcclusion, hook: H) -> Result<TrialInputs, SimError>
where
    H: FnOnce(&Scene, &mut ViewObservation),
{
    let scene = generate_scene(&config.scene, seed)?;
    let delta = sample_motion(&config.scene.motion, &mut trial_rng(seed, 1));
    let scene = apply_fragment_motion(&scene, &delta)?;
    let cams = recon_cameras_at(&scene, &config.recon_tilts, config.recon_view_jitter_deg, &mut trial_rng(seed, 2));
    let mut recon = Vec::with_capacity(3);
    for (k, cam) in cams.iter().enumerate() {
        let mut rng = trial_rng(seed, 3 + k as u64);
        recon.push(observe_view(&scene, k, cam, false, &config.noise, &ForcedOcclusion::default(), &mut rng)?);
    }
    let est_cam = estimation_camera(&scene, &config.estimation_view, &mut trial_rng(seed, 6));
    let mut est = observe_view(&scene, 3, &est_cam, true, &config.noise, forced, &mut trial_rng(seed, 7))?;
    hook(&scene, &mut est);
    let image = render_view(&scene, &est, &mut trial_rng(seed, 8))?;
    let recon_views: [ViewObservation; 3] = recon.try_into().expect("three views");
    Ok(TrialInputs {
        scene,
        recon_views,
        estimation_view: est,
        estimation_image: image,
    })
}

/// Outcome of one end-to-end trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    /// RMS distance of reconstructed BBs to the nearest true BB (mm).
    pub recon_rms_mm: Option<f64>,
    /// True when every reconstructed BB is labeled with its true constellation.
    pub labels_correct: bool,
    pub recon_error: Option<String>,
    pub estimate: Option<FragmentPoseEstimate>,
    pub error: Option<ErrorReport>,
    /// Wall time of the single-view estimate (s).
    pub estimate_seconds: f64,
    pub n_detections: usize,
}

impl TrialResult {
    pub fn is_success(&self) -> bool {
        self.error.is_some()
    }
}

fn nearest(p: &Point3<f64>, set: &[Point3<f64>]) -> f64 {
    set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
}

/// Reconstruction accuracy: RMS distance to the true BBs, and whether the
/// labels agree with the truth.
pub fn recon_accuracy(rec: &Reconstruction, scene: &Scene) -> (f64, bool) {
    let il = scene.ilium_bbs.bbs();
    let fr = scene.fragment_bbs.bbs();
    let all: Vec<Point3<f64>> = il.iter().chain(fr).copied().collect();
    let pts: Vec<&Point3<f64>> = rec.ilium.bbs().iter().chain(rec.fragment.bbs()).collect();
    let ms = pts.iter().map(|p| nearest(p, &all).powi(2)).sum::<f64>() / pts.len().max(1) as f64;
    let labels = rec.ilium.bbs().iter().all(|p| nearest(p, il) < nearest(p, fr))
        && rec.fragment.bbs().iter().all(|p| nearest(p, fr) < nearest(p, il));
    (ms.sqrt(), labels)
}

/// Reconstruct the constellations from the three preoperative views.
pub fn reconstruct_views(inputs: &TrialInputs, config: &TrialConfig, exec: Execution) -> Result<Reconstruction, SimError> {
    let v = &inputs.recon_views;
    let dets = [v[0].detections(), v[1].detections(), v[2].detections()];
    let s = &inputs.scene;
    Ok(reconstruct(
        [&dets[0], &dets[1], &dets[2]],
        [&v[0].camera_used, &v[1].camera_used, &v[2].camera_used],
        &s.surface,
        s.side,
        &s.iliac_reference,
        &config.recon,
        exec,
    )?)
}

pub fn priors_from(rec: &Reconstruction, scene: &Scene) -> Priors {
    Priors::new(
        rec.ilium.clone(),
        rec.fragment.clone(),
        scene.app.clone(),
        scene.lce_landmarks.clone(),
        scene.surface.points(),
    )
}

/// Run a full trial: simulate, reconstruct, estimate, evaluate.
pub fn run_trial(seed: u64, config: &TrialConfig) -> TrialResult {
    run_trial_with(seed, config, &ForcedOcclusion::default(), |_, _| {})
}

pub fn run_trial_with<H>(seed: u64, config: &TrialConfig, forced: &ForcedOcclusion, hook: H) -> TrialResult
where
    H: FnOnce(&Scene, &mut ViewObservation),
{
    let mut result = TrialResult {
        seed,
        recon_rms_mm: None,
        labels_correct: false,
        recon_error: None,
        estimate: None,
        error: None,
        estimate_seconds: 0.0,
        n_detections: 0,
    };
    let inputs = match simulate_trial(seed, config, forced, hook) {
        Ok(i) => i,
        Err(e) => {
            result.recon_error = Some(e.to_string());
            return result;
        }
    };
    let exec = config.pipeline.execution;
    let rec = match reconstruct_views(&inputs, config, exec) {
        Ok(r) => r,
        Err(e) => {
            result.recon_error = Some(e.to_string());
            return result;
        }
    };
    let (rms, labels) = recon_accuracy(&rec, &inputs.scene);
    result.recon_rms_mm = Some(rms);
    result.labels_correct = labels;
    let priors = priors_from(&rec, &inputs.scene);
    let cam = &inputs.estimation_view.camera_used;
    let t0 = Instant::now();
    let dets = if config.detect_from_image {
        match detect_image(&inputs.estimation_image, &config.pipeline.detector, 3, exec) {
            Ok(d) => d.points(),
            Err(e) => {
                result.recon_error = Some(e.to_string());
                return result;
            }
        }
    } else {
        inputs.estimation_view.points()
    };
    result.n_detections = dets.len();
    let est = estimate_from_detections(&dets, &inputs.estimation_image, cam, &priors, &config.pipeline);
    result.estimate_seconds = t0.elapsed().as_secs_f64();
    result.error = evaluate(&est, &inputs.scene).ok();
    result.estimate = Some(est);
    result
}

/// Independent trials over `seeds`, in seed order.
pub fn run_batch(seeds: &[u64], config: &TrialConfig, exec: Execution) -> Vec<TrialResult> {
    exec.map(seeds, |&s| run_trial(s, config))
}

/// Seeds `base, base+1, …` of length `n`.
pub fn seed_range(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|k| base.wrapping_add(k)).collect()
}

/// Random seed drawn from an RNG (for callers that derive trial seeds).
pub fn derive_seed(rng: &mut impl Rng) -> u64 {
    rng.random()
}
