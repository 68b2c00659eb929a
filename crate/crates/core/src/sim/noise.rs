use std::path::Path;

use nalgebra::{Point2, Point3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{perturb_camera, CameraError, Scene, SimError};
use crate::detect::DetectionSet;
use crate::geometry::CArmCamera;

/// Where false detections are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalsePlacement {
    /// Anywhere in the image.
    Uniform,
    /// 15–80 px from a random projected BB (screws and K-wires sit near the BBs).
    #[default]
    NearConstellations,
}

/// Measurement and scene-clutter noise.
///
/// Extrinsic perturbation applies to every view. Occlusion and false
/// detections apply only to the postoperative view: the reconstruction views
/// are taken before any K-wires or screws are placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub detection_jitter_px: f64,
    /// Per-axis extrinsic rotation σ about the view center (degrees).
    pub camera_rot_deg: f64,
    /// Extrinsic translation σ along the viewing axis (mm).
    pub camera_trans_mm: f64,
    /// Per-axis extrinsic translation σ parallel to the detector (mm).
    pub camera_inplane_mm: f64,
    /// Independent occlusion probability per BB.
    pub p_occlusion: f64,
    /// Additionally occlude exactly this many BBs (chosen at random).
    pub n_occluded: usize,
    pub n_false_detections: usize,
    pub false_placement: FalsePlacement,
    /// Detect the mirrored contralateral BBs when they are in view.
    pub contralateral_clutter: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            detection_jitter_px: 0.0,
            camera_rot_deg: 0.0,
            camera_trans_mm: 0.0,
            camera_inplane_mm: 0.0,
            p_occlusion: 0.0,
            n_occluded: 0,
            n_false_detections: 0,
            false_placement: FalsePlacement::NearConstellations,
            contralateral_clutter: false,
        }
    }

    /// 0.5 px jitter, 0.5° / 2 mm (0.25 mm in-plane) extrinsic error, one
    /// occluded BB and four false detections.
    pub fn calibrated() -> Self {
        Self {
            detection_jitter_px: 0.5,
            camera_rot_deg: 0.5,
            camera_trans_mm: 2.0,
            camera_inplane_mm: 0.25,
            n_occluded: 1,
            n_false_detections: 4,
            ..Self::none()
        }
    }

    /// Calibrated noise plus contralateral BB detections.
    pub fn bilateral() -> Self {
        Self {
            contralateral_clutter: true,
            ..Self::calibrated()
        }
    }

    pub const PROFILE_NAMES: [&'static str; 3] = ["none", "calibrated", "bilateral"];

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Self::none()),
            "calibrated" => Some(Self::calibrated()),
            "bilateral" => Some(Self::bilateral()),
            _ => None,
        }
    }

    /// A profile name or a path to a JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self, SimError> {
        if let Some(p) = Self::profile(name_or_path) {
            return Ok(p);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))
            .map_err(|e| SimError::Io(format!("noise profile {name_or_path}: {e}")))?;
        let m: NoiseModel = serde_json::from_str(&text).map_err(|e| SimError::Json(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn camera_error(&self) -> CameraError {
        CameraError {
            rot_deg: self.camera_rot_deg,
            depth_mm: self.camera_trans_mm,
            inplane_mm: self.camera_inplane_mm,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let sig = [self.detection_jitter_px, self.camera_rot_deg, self.camera_trans_mm, self.camera_inplane_mm];
        if sig.iter().any(|s| !(*s >= 0.0)) {
            return Err(SimError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.p_occlusion) {
            return Err(SimError::InvalidConfig("p_occlusion must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// What a detection corresponds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum TruthKind {
    Ilium(usize),
    Fragment(usize),
    Contralateral(usize),
    False,
}

impl TruthKind {
    pub fn is_false(self) -> bool {
        matches!(self, TruthKind::False | TruthKind::Contralateral(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthDetection {
    /// Reported position (with jitter).
    pub pos: Point2<f64>,
    /// Exact projection under the true camera.
    pub exact: Point2<f64>,
    pub kind: TruthKind,
}

/// One simulated view: cameras and the truth table of its detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewObservation {
    pub view_id: usize,
    /// Taken after the fragment motion.
    pub postop: bool,
    pub camera_true: CArmCamera,
    /// Camera as known to the estimator (perturbed extrinsics).
    pub camera_used: CArmCamera,
    /// In shuffled order.
    pub truth: Vec<TruthDetection>,
    pub occluded: Vec<TruthKind>,
}

impl ViewObservation {
    pub fn detections(&self) -> DetectionSet {
        DetectionSet::from_points(self.view_id, self.truth.iter().map(|t| t.pos))
    }

    pub fn points(&self) -> Vec<Point2<f64>> {
        self.truth.iter().map(|t| t.pos).collect()
    }
}

/// Which BBs the caller wants removed from a view regardless of the noise model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForcedOcclusion(pub Vec<TruthKind>);

/// Project the scene into one view and apply the noise model.
pub fn observe_view(
    scene: &Scene,
    view_id: usize,
    camera: &CArmCamera,
    postop: bool,
    noise: &NoiseModel,
    forced: &ForcedOcclusion,
    rng: &mut impl Rng,
) -> Result<ViewObservation, SimError> {
    let pivot = scene.app.app_to_volume().apply(&scene.view_center_app());
    let camera_used = perturb_camera(camera, &pivot, &noise.camera_error(), rng);

    let frag: Vec<Point3<f64>> = if postop { scene.fragment_bbs_moved() } else { scene.fragment_bbs.bbs().to_vec() };
    let mut bbs: Vec<(TruthKind, Point3<f64>)> = Vec::new();
    bbs.extend(scene.ilium_bbs.bbs().iter().enumerate().map(|(i, p)| (TruthKind::Ilium(i), *p)));
    bbs.extend(frag.iter().enumerate().map(|(i, p)| (TruthKind::Fragment(i), *p)));
    let n_own = bbs.len();
    if noise.contralateral_clutter {
        bbs.extend(scene.contralateral_bbs.iter().enumerate().map(|(i, p)| (TruthKind::Contralateral(i), *p)));
    }

    let mut occluded: Vec<TruthKind> = forced.0.clone();
    if postop {
        let mut own: Vec<usize> = (0..n_own).collect();
        own.shuffle(rng);
        for &i in own.iter().take(noise.n_occluded) {
            if !occluded.contains(&bbs[i].0) {
                occluded.push(bbs[i].0);
            }
        }
        for (kind, _) in &bbs[..n_own] {
            if noise.p_occlusion > 0.0 && rng.random_bool(noise.p_occlusion) && !occluded.contains(kind) {
                occluded.push(*kind);
            }
        }
    }

    let jitter = Normal::new(0.0, noise.detection_jitter_px.max(1e-300)).expect("finite sigma");
    let mut truth = Vec::new();
    let mut exact_all = Vec::new();
    for (kind, p) in &bbs {
        let exact = camera.project(p)?;
        exact_all.push(exact);
        if !camera.in_image(&exact) || occluded.contains(kind) {
            continue;
        }
        let pos = if noise.detection_jitter_px > 0.0 {
            Point2::new(exact.x + jitter.sample(rng), exact.y + jitter.sample(rng))
        } else {
            exact
        };
        truth.push(TruthDetection { pos, exact, kind: *kind });
    }

    if postop {
        for _ in 0..noise.n_false_detections {
            let pos = match noise.false_placement {
                FalsePlacement::Uniform => Point2::new(
                    rng.random_range(0.0..camera.cols() as f64 - 1.0),
                    rng.random_range(0.0..camera.rows() as f64 - 1.0),
                ),
                FalsePlacement::NearConstellations => {
                    let anchor = exact_all[rng.random_range(0..n_own)];
                    let (r, a) = (rng.random_range(15.0..80.0), rng.random_range(0.0..std::f64::consts::TAU));
                    Point2::new(anchor.x + r * a.cos(), anchor.y + r * a.sin())
                }
            };
            if camera.in_image(&pos) {
                truth.push(TruthDetection { pos, exact: pos, kind: TruthKind::False });
            }
        }
    }
    truth.shuffle(rng);
    Ok(ViewObservation {
        view_id,
        postop,
        camera_true: camera.clone(),
        camera_used,
        truth,
        occluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scene, recon_cameras, SceneConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truth_table_consistent() {
        let s = generate_scene(&SceneConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cams = recon_cameras(&s, 0.0, &mut rng);
        let obs = observe_view(&s, 0, &cams[0], false, &NoiseModel::none(), &ForcedOcclusion::default(), &mut rng).unwrap();
        assert_eq!(obs.truth.len(), 8);
        for t in &obs.truth {
            let p = match t.kind {
                TruthKind::Ilium(i) => s.ilium_bbs.bbs()[i],
                TruthKind::Fragment(i) => s.fragment_bbs.bbs()[i],
                _ => unreachable!(),
            };
            assert!((cams[0].project(&p).unwrap() - t.exact).norm() < 1e-6);
            assert_eq!(t.pos, t.exact);
        }
    }

    #[test]
    fn occlusion_and_clutter_only_postop() {
        let s = generate_scene(&SceneConfig::default(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cams = recon_cameras(&s, 0.0, &mut rng);
        let noise = NoiseModel::calibrated();
        let pre = observe_view(&s, 0, &cams[0], false, &noise, &ForcedOcclusion::default(), &mut rng).unwrap();
        assert_eq!(pre.truth.len(), 8);
        let post = observe_view(&s, 1, &cams[0], true, &noise, &ForcedOcclusion::default(), &mut rng).unwrap();
        assert_eq!(post.occluded.len(), 1);
        assert!(post.truth.iter().all(|t| t.kind != post.occluded[0]));
        assert_eq!(post.truth.iter().filter(|t| t.kind.is_false()).count(), 4);

        let forced = ForcedOcclusion(vec![TruthKind::Ilium(2)]);
        let one = observe_view(&s, 0, &cams[0], false, &NoiseModel::none(), &forced, &mut rng).unwrap();
        assert!(one.truth.iter().all(|t| t.kind != TruthKind::Ilium(2)));
    }

    #[test]
    fn profiles_resolve() {
        assert_eq!(NoiseModel::resolve("calibrated").unwrap().n_false_detections, 4);
        assert!(NoiseModel::resolve("/nonexistent/profile.json").is_err());
    }
}
