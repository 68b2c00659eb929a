use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::geometry::{CArmCamera, Frame, RigidTransform};
use crate::pose::REFERENCE_DEPTH_RATIO;
use crate::geometry::DEFAULT_SDD_MM;

/// C-arm orientation relative to the reference AP view: rotations (degrees)
/// about the APP LR, IS and AP axes, plus a depth offset of the aim point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewTilt {
    pub lr_deg: f64,
    pub is_deg: f64,
    pub ap_deg: f64,
    pub depth_offset_mm: f64,
}

impl ViewTilt {
    pub const fn new(lr_deg: f64, is_deg: f64, ap_deg: f64) -> Self {
        Self { lr_deg, is_deg, ap_deg, depth_offset_mm: 0.0 }
    }
}

/// Nominal orientations of the three reconstruction views.
pub const RECON_TILTS: [ViewTilt; 3] = [
    ViewTilt::new(0.0, 0.0, 5.0),
    ViewTilt::new(0.0, 25.0, 0.0),
    ViewTilt::new(15.0, -20.0, 0.0),
];

/// Camera looking at `center` (APP frame) with the given tilt away from the
/// reference AP orientation.
pub fn view_camera(scene: &Scene, center: &Point3<f64>, tilt: &ViewTilt) -> CArmCamera {
    let reference = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
    let r_tilt = Rotation3::from_axis_angle(&Vector3::z_axis(), tilt.ap_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::y_axis(), tilt.is_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), tilt.lr_deg.to_radians());
    let r = reference * r_tilt.matrix();
    let depth = REFERENCE_DEPTH_RATIO * DEFAULT_SDD_MM + tilt.depth_offset_mm;
    let t = Vector3::new(0.0, 0.0, depth) - r * center.coords;
    let app_to_carm = RigidTransform::from_rotation(&Rotation3::from_matrix(&r), t, Frame::App, Frame::CArm);
    let ext = app_to_carm.compose(&scene.app.volume_to_app()).expect("APP chains into C-arm");
    CArmCamera::default_with_extrinsics(ext)
}

/// The three reconstruction cameras at [`RECON_TILTS`], each jittered by up
/// to `jitter_deg` per axis.
pub fn recon_cameras(scene: &Scene, jitter_deg: f64, rng: &mut impl Rng) -> [CArmCamera; 3] {
    recon_cameras_at(scene, &RECON_TILTS, jitter_deg, rng)
}

pub fn recon_cameras_at(scene: &Scene, tilts: &[ViewTilt; 3], jitter_deg: f64, rng: &mut impl Rng) -> [CArmCamera; 3] {
    let c = scene.view_center_app();
    tilts.map(|t| {
        let mut j = t;
        if jitter_deg > 0.0 {
            j.lr_deg += rng.random_range(-jitter_deg..=jitter_deg);
            j.is_deg += rng.random_range(-jitter_deg..=jitter_deg);
            j.ap_deg += rng.random_range(-jitter_deg..=jitter_deg);
        }
        view_camera(scene, &c, &j)
    })
}

/// Bounds of the random single-view orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationViewRange {
    pub lr_deg: f64,
    pub is_deg: f64,
    pub ap_deg: f64,
    pub depth_mm: f64,
    pub center_mm: f64,
}

impl Default for EstimationViewRange {
    fn default() -> Self {
        Self {
            lr_deg: 15.0,
            is_deg: 20.0,
            ap_deg: 8.0,
            depth_mm: 30.0,
            center_mm: 10.0,
        }
    }
}

pub fn estimation_camera(scene: &Scene, range: &EstimationViewRange, rng: &mut impl Rng) -> CArmCamera {
    let mut sym = |b: f64| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
    let tilt = ViewTilt {
        lr_deg: sym(range.lr_deg),
        is_deg: sym(range.is_deg),
        ap_deg: sym(range.ap_deg),
        depth_offset_mm: sym(range.depth_mm),
    };
    let c = scene.view_center_app() + Vector3::new(sym(range.center_mm), sym(range.center_mm), 0.0);
    view_camera(scene, &c, &tilt)
}

/// Standard deviations of a simulated extrinsic error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraError {
    /// Per-axis rotation about the pivot (degrees).
    pub rot_deg: f64,
    /// Translation along the source-to-detector axis (mm).
    pub depth_mm: f64,
    /// Per-axis translation parallel to the detector (mm).
    pub inplane_mm: f64,
}

impl CameraError {
    pub fn is_zero(&self) -> bool {
        self.rot_deg <= 0.0 && self.depth_mm <= 0.0 && self.inplane_mm <= 0.0
    }
}

/// Extrinsic error: a random rotation about `pivot` (volume frame) followed
/// by a random translation, anisotropic with respect to the viewing axis.
pub fn perturb_camera(camera: &CArmCamera, pivot: &Point3<f64>, err: &CameraError, rng: &mut impl Rng) -> CArmCamera {
    if err.is_zero() {
        return camera.clone();
    }
    let mut gauss = |s: f64| if s > 0.0 { Normal::new(0.0, s).expect("positive sigma").sample(rng) } else { 0.0 };
    let omega = Vector3::new(gauss(err.rot_deg), gauss(err.rot_deg), gauss(err.rot_deg)).map(f64::to_radians);
    // C-arm axes: x along detector columns, y along rows, z toward the detector.
    let tau_carm = Vector3::new(gauss(err.inplane_mm), gauss(err.inplane_mm), gauss(err.depth_mm));
    let tau = camera.extrinsics().inverse().apply_vector(&tau_carm);
    let rot = Rotation3::new(omega);
    // Perturbation in the volume frame: p ↦ R (p − pivot) + pivot + τ.
    let t = pivot.coords - rot * pivot.coords + tau;
    let perturbation = RigidTransform::from_rotation(&rot, t, Frame::Volume, Frame::Volume);
    let ext = camera.extrinsics().compose(&perturbation).expect("volume frame chains");
    camera.with_extrinsics(ext).expect("perturbed camera stays valid")
}
