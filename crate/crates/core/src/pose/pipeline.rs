use std::time::Instant;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::{
    general_prune, match_by_reprojection, prune_ilium_anatomical, refine_pose, splat_similarity,
    stable_argmin, BbMatch, PipelineConfig, PoseError, ReferenceApPose, RefineOptions, Regularization, ResidualNoise, SplatModel,
    SplatTarget, StageCounts,
};
use crate::detect::{detect_image, Grid};
use crate::geometry::{lce_angle, relative_fragment_pose, AnatomicalFrame, CArmCamera, LceLandmarks, RigidTransform};
use crate::recon::Constellation;

/// Surface samples kept in [`Priors`] for similarity scoring.
pub const DEFAULT_SPLAT_SAMPLES: usize = 1500;

/// Everything known before the single-view image is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub ilium: Constellation,
    pub fragment: Constellation,
    pub app: AnatomicalFrame,
    pub landmarks: LceLandmarks,
    /// Pelvis surface samples (volume frame) used for similarity scoring.
    pub surface_samples: Vec<Point3<f64>>,
}

impl Priors {
    /// Subsamples `surface` to at most [`DEFAULT_SPLAT_SAMPLES`] points.
    pub fn new(
        ilium: Constellation,
        fragment: Constellation,
        app: AnatomicalFrame,
        landmarks: LceLandmarks,
        surface: &[Point3<f64>],
    ) -> Self {
        let stride = surface.len().div_ceil(DEFAULT_SPLAT_SAMPLES).max(1);
        Self {
            ilium,
            fragment,
            app,
            landmarks,
            surface_samples: surface.iter().step_by(stride).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Success,
    FailedIlium,
    FailedFragment,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub detect_ms: f64,
    pub ilium_ms: f64,
    pub fragment_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentPoseEstimate {
    pub status: EstimateStatus,
    pub delta_app: Option<RigidTransform>,
    pub ilium_pose: Option<RigidTransform>,
    pub fragment_pose: Option<RigidTransform>,
    /// Detection indices refer to the input order.
    pub ilium_matches: Vec<BbMatch>,
    pub fragment_matches: Vec<BbMatch>,
    pub lce_deg: Option<f64>,
    pub ilium_counts: StageCounts,
    pub fragment_counts: StageCounts,
    pub timings: StageTimings,
}

impl FragmentPoseEstimate {
    fn failed(status: EstimateStatus) -> Self {
        Self {
            status,
            delta_app: None,
            ilium_pose: None,
            fragment_pose: None,
            ilium_matches: Vec::new(),
            fragment_matches: Vec::new(),
            lce_deg: None,
            ilium_counts: StageCounts::default(),
            fragment_counts: StageCounts::default(),
            timings: StageTimings::default(),
        }
    }

    pub fn n_ilium_matched(&self) -> usize {
        self.ilium_matches.len()
    }

    pub fn n_frag_matched(&self) -> usize {
        self.fragment_matches.len()
    }

    pub fn is_success(&self) -> bool {
        self.status == EstimateStatus::Success
    }
}

/// Result of one estimation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub pose: Option<RigidTransform>,
    pub matches: Vec<BbMatch>,
    pub counts: StageCounts,
}

impl StageOutcome {
    fn failed(counts: StageCounts) -> Self {
        Self {
            pose: None,
            matches: Vec::new(),
            counts,
        }
    }
}

/// Ilium constellation pose: enumerate, prune anatomically, pick the most
/// image-like candidate, register it, then match and refine.
pub fn estimate_ilium(
    dets: &[Point2<f64>],
    image: &Grid,
    camera: &CArmCamera,
    priors: &Priors,
    config: &PipelineConfig,
) -> StageOutcome {
    let cfg = &config.ilium;
    let exec = config.execution;
    let reference = ReferenceApPose::canonical(camera);
    let filter = |pose: &RigidTransform| {
        prune_ilium_anatomical(pose, &reference, &priors.app, &priors.fragment, dets, camera, cfg)
    };
    let pruned = match general_prune(&priors.ilium, dets, camera, &cfg.p3p(), filter, exec) {
        Ok(p) => p,
        Err(_) => return StageOutcome::failed(StageCounts::default()),
    };
    let counts = pruned.counts;
    let model = SplatModel {
        surface: priors.surface_samples.clone(),
        bbs: priors.ilium.bbs().to_vec(),
        bb_weight: cfg.splat_bb_weight,
        sigma: cfg.splat_sigma,
    };
    let target = SplatTarget::new(image, cfg.splat_downsample);
    let scores = exec.map(&pruned.candidates, |c| splat_similarity(&c.pose, &model, &target, camera));
    let Some(best) = stable_argmin(&scores) else {
        return StageOutcome::failed(counts);
    };
    let selected = &pruned.candidates[best].pose;
    let bbs = priors.ilium.bbs();

    // Registration step: bounded refinement on the matches the selected
    // candidate implies.
    let implied = match_by_reprojection(selected, bbs, dets, camera, cfg.match_gate_px);
    let bounded = RefineOptions {
        regularization: None,
        bounds: Some(cfg.registration_bounds),
    };
    let registered = refine_pose(selected, bbs, &implied, dets, camera, &bounded).unwrap_or_else(|_| selected.clone());

    let matches = match_by_reprojection(&registered, bbs, dets, camera, cfg.match_gate_px);
    if matches.len() < cfg.min_matches {
        return StageOutcome::failed(counts);
    }
    let pose = if matches.len() >= 3 {
        refine_pose(&registered, bbs, &matches, dets, camera, &RefineOptions::default()).unwrap_or(registered)
    } else {
        registered
    };
    let matches = match_by_reprojection(&pose, bbs, dets, camera, cfg.match_gate_px);
    if matches.len() < cfg.min_matches {
        return StageOutcome::failed(counts);
    }
    StageOutcome {
        pose: Some(pose),
        matches,
        counts,
    }
}

/// Fragment constellation pose given the ilium pose and the residual noise
/// of its fit. `dets` must already exclude the ilium-matched detections;
/// returned match indices refer to `dets`.
pub fn estimate_fragment(
    dets: &[Point2<f64>],
    ilium_pose: &RigidTransform,
    ilium_noise: &ResidualNoise,
    camera: &CArmCamera,
    priors: &Priors,
    config: &PipelineConfig,
) -> StageOutcome {
    let cfg = &config.fragment;
    let exec = config.execution;
    let bbs = priors.fragment.bbs();

    // Keep detections near some reprojected preoperative fragment BB.
    let projected: Vec<Point2<f64>> = bbs.iter().filter_map(|b| camera.project_carm(&ilium_pose.apply(b)).ok()).collect();
    let kept: Vec<usize> = (0..dets.len())
        .filter(|&i| projected.iter().any(|p| (p - dets[i]).norm() <= cfg.distance_gate_px))
        .collect();
    let pts: Vec<Point2<f64>> = kept.iter().map(|&i| dets[i]).collect();

    let r_hat = camera.depth_ratio(&ilium_pose.apply(&priors.fragment.centroid()));
    let p3p = cfg.p3p(r_hat);
    let filter = |pose: &RigidTransform| match relative_fragment_pose(ilium_pose, pose, &priors.app) {
        Ok(d) => d.rotation_angle_deg() <= cfg.rot_gate_deg && d.translation().norm() <= cfg.trans_gate_mm,
        Err(_) => false,
    };
    let pruned = match general_prune(&priors.fragment, &pts, camera, &p3p, filter, exec) {
        Ok(p) => p,
        Err(_) => return StageOutcome::failed(StageCounts::default()),
    };
    let counts = pruned.counts;
    let w_select = cfg.effective_weight(ilium_noise);
    // Most matches first; among those, the lowest regularized objective
    // (mean squared reprojection distance plus the translation prior). With
    // only three visible BBs every candidate fits its triple exactly, so the
    // prior is what separates them.
    let scored = exec.map(&pruned.candidates, |c| {
        let m = match_by_reprojection(&c.pose, bbs, &pts, camera, cfg.match_gate_px);
        let t2 = relative_fragment_pose(ilium_pose, &c.pose, &priors.app).map_or(f64::INFINITY, |d| d.translation().norm_squared());
        (m.len(), mean_squared_distance(&m) + w_select * t2)
    });
    let mut best: Option<usize> = None;
    for (i, s) in scored.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => s.0 > scored[b].0 || (s.0 == scored[b].0 && s.1 < scored[b].1),
        };
        if better {
            best = Some(i);
        }
    }
    let Some(best) = best else {
        return StageOutcome::failed(counts);
    };
    if scored[best].0 < cfg.min_matches {
        return StageOutcome::failed(counts);
    }
    let start = &pruned.candidates[best].pose;
    let matches = match_by_reprojection(start, bbs, &pts, camera, cfg.match_gate_px);
    // An unregularized fit first, to pool its residual into the noise estimate.
    let free = refine_pose(start, bbs, &matches, &pts, camera, &RefineOptions::default()).unwrap_or_else(|_| start.clone());
    let free_matches = match_by_reprojection(&free, bbs, &pts, camera, cfg.match_gate_px);
    let noise = ilium_noise.pooled(if free_matches.len() == matches.len() {
        ResidualNoise::from_matches(&free_matches)
    } else {
        ResidualNoise::default()
    });
    let opts = RefineOptions {
        regularization: Some(Regularization {
            weight: cfg.effective_weight(&noise),
            ilium_pose,
            app: &priors.app,
        }),
        bounds: None,
    };
    let pose = refine_pose(start, bbs, &matches, &pts, camera, &opts).unwrap_or_else(|_| start.clone());
    let mut matches = match_by_reprojection(&pose, bbs, &pts, camera, cfg.match_gate_px);
    if matches.len() < cfg.min_matches {
        return StageOutcome::failed(counts);
    }
    for m in &mut matches {
        m.det = kept[m.det];
    }
    StageOutcome {
        pose: Some(pose),
        matches,
        counts,
    }
}

fn mean_squared_distance(m: &[BbMatch]) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    m.iter().map(|x| x.distance * x.distance).sum::<f64>() / m.len() as f64
}

/// Indices of `dets` sorted by `(x, y)`, so results do not depend on input order.
fn canonical_order(dets: &[Point2<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[a].x.total_cmp(&dets[b].x).then(dets[a].y.total_cmp(&dets[b].y)).then(a.cmp(&b)));
    idx
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Two-stage estimate from already-detected BB centers. `image` is used
/// only for similarity scoring.
pub fn estimate_from_detections(
    dets: &[Point2<f64>],
    image: &Grid,
    camera: &CArmCamera,
    priors: &Priors,
    config: &PipelineConfig,
) -> FragmentPoseEstimate {
    let t0 = Instant::now();
    let order = canonical_order(dets);
    let sorted: Vec<Point2<f64>> = order.iter().map(|&i| dets[i]).collect();

    let ilium = estimate_ilium(&sorted, image, camera, priors, config);
    let ilium_ms = ms_since(t0);
    let Some(ilium_pose) = ilium.pose else {
        let mut e = FragmentPoseEstimate::failed(EstimateStatus::FailedIlium);
        e.ilium_counts = ilium.counts;
        e.timings = StageTimings {
            ilium_ms,
            total_ms: ilium_ms,
            ..Default::default()
        };
        return e;
    };

    let t1 = Instant::now();
    let used: Vec<bool> = (0..sorted.len()).map(|i| ilium.matches.iter().any(|m| m.det == i)).collect();
    let rest: Vec<usize> = (0..sorted.len()).filter(|&i| !used[i]).collect();
    let rest_pts: Vec<Point2<f64>> = rest.iter().map(|&i| sorted[i]).collect();
    let ilium_noise = ResidualNoise::from_matches(&ilium.matches);
    let frag = estimate_fragment(&rest_pts, &ilium_pose, &ilium_noise, camera, priors, config);
    let fragment_ms = ms_since(t1);

    let to_input = |m: &BbMatch, map: &dyn Fn(usize) -> usize| BbMatch { det: order[map(m.det)], ..*m };
    let ilium_matches: Vec<BbMatch> = ilium.matches.iter().map(|m| to_input(m, &|i| i)).collect();
    let mut est = FragmentPoseEstimate::failed(EstimateStatus::FailedFragment);
    est.ilium_pose = Some(ilium_pose.clone());
    est.ilium_matches = ilium_matches;
    est.ilium_counts = ilium.counts;
    est.fragment_counts = frag.counts;
    est.timings = StageTimings {
        detect_ms: 0.0,
        ilium_ms,
        fragment_ms,
        total_ms: ms_since(t0),
    };
    let Some(frag_pose) = frag.pose else {
        return est;
    };
    est.fragment_matches = frag.matches.iter().map(|m| to_input(m, &|i| rest[i])).collect();
    let delta = relative_fragment_pose(&ilium_pose, &frag_pose, &priors.app).expect("constellation poses chain");
    est.lce_deg = lce_angle(&delta, &priors.landmarks).ok();
    est.delta_app = Some(delta);
    est.fragment_pose = Some(frag_pose);
    est.status = EstimateStatus::Success;
    est.timings.total_ms = ms_since(t0);
    est
}

/// Detect BBs in `image`, then run [`estimate_from_detections`].
pub fn estimate_single_view(
    image: &Grid,
    camera: &CArmCamera,
    priors: &Priors,
    config: &PipelineConfig,
) -> Result<FragmentPoseEstimate, PoseError> {
    let t0 = Instant::now();
    let dets = detect_image(image, &config.detector, 0, config.execution)?;
    let detect_ms = ms_since(t0);
    let mut est = estimate_from_detections(&dets.points(), image, camera, priors, config);
    est.timings.detect_ms = detect_ms;
    est.timings.total_ms += detect_ms;
    Ok(est)
}
