//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::{Point2, Point3, Rotation3, Vector3};
use rand::Rng;

use fragpose::geometry::{CArmCamera, Frame, RigidTransform};
use fragpose::pose::Priors;
use fragpose::sim::{NoiseModel, Scene, TrialConfig, TrialInputs};

pub fn config_with(noise: NoiseModel) -> TrialConfig {
    TrialConfig {
        noise,
        ..TrialConfig::default()
    }
}

/// Priors built from the true preoperative constellations.
pub fn true_priors(scene: &Scene) -> Priors {
    Priors::new(
        scene.ilium_bbs.clone(),
        scene.fragment_bbs.clone(),
        scene.app.clone(),
        scene.lce_landmarks.clone(),
        scene.surface.points(),
    )
}

/// True volume-to-C-arm poses of the ilium and fragment constellations in
/// the postoperative view.
pub fn true_poses(inputs: &TrialInputs) -> (RigidTransform, RigidTransform) {
    let ext = inputs.estimation_view.camera_true.extrinsics().clone();
    let frag = ext.compose(&inputs.scene.fragment_motion_volume()).unwrap();
    (ext, frag)
}

pub fn pose_gap(a: &RigidTransform, b: &RigidTransform) -> (f64, f64) {
    let e = a.compose(&b.inverse()).unwrap();
    (e.rotation_angle_deg(), e.translation().norm())
}

pub fn random_rotation(rng: &mut impl Rng, max_rad: f64) -> Rotation3<f64> {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis.normalize() };
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(-max_rad..max_rad))
}

/// Camera looking down +z at the origin from `depth` mm, tilted by `rot`.
pub fn camera_at(rot: &Rotation3<f64>, depth: f64) -> CArmCamera {
    let ext = RigidTransform::from_rotation(rot, Vector3::new(0.0, 0.0, depth), Frame::Volume, Frame::CArm);
    CArmCamera::default_with_extrinsics(ext)
}

pub fn random_point(rng: &mut impl Rng, half: f64) -> Point3<f64> {
    Point3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

pub fn shift(p: &Point2<f64>, dx: f64, dy: f64) -> Point2<f64> {
    Point2::new(p.x + dx, p.y + dy)
}

/// Independent check of one P3P solution: depth bounds on all three rays,
/// pairwise lengths within `1 ± ε` of the model, and reprojection within
/// `pixel_tol`. Uses only the camera's source and detector geometry.
pub fn verify_p3p_solution(
    sol: &fragpose::p3p::P3PSolution,
    model: &[Point3<f64>; 3],
    dets: &[Point2<f64>; 3],
    cam: &CArmCamera,
    cfg: &fragpose::p3p::P3PConfig,
) -> Result<(), String> {
    let s = cam.source().coords;
    let ts = [sol.ratio, sol.t2, sol.t3];
    for t in ts {
        if t < cfg.t_bounds[0] - 1e-12 || t > cfg.t_bounds[1] + 1e-12 {
            return Err(format!("depth parameter {t} outside {:?}", cfg.t_bounds));
        }
    }
    let b: Vec<Vector3<f64>> = (0..3).map(|k| s + (cam.detector_point(&dets[k]).coords - s) * ts[k]).collect();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let q = (b[i] - b[j]).norm() / (model[i] - model[j]).norm();
        if (q - 1.0).abs() > cfg.epsilon + 1e-12 {
            return Err(format!("length ratio {q} for pair ({i},{j}) outside 1 ± {}", cfg.epsilon));
        }
    }
    for k in 0..3 {
        let p = sol.pose.apply(&model[k]);
        let z = p.coords - s;
        let axis = cam.depth_axis();
        let depth = z.dot(axis);
        if depth <= 0.0 {
            return Err("model point behind the source".into());
        }
        let px = cam.project_carm(&p).map_err(|e| e.to_string())?;
        let d = (px - dets[k]).norm();
        if d > cfg.pixel_tol + 1e-9 {
            return Err(format!("reprojection {d} px above {}", cfg.pixel_tol));
        }
    }
    Ok(())
}

/// Local minima over a uniform `t` grid of `(l² − |o + t·d − a|²)²`.
pub fn grid_length_minima(o: &Point3<f64>, d: &Vector3<f64>, a: &Point3<f64>, l: f64, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let f = |t: f64| (l * l - (o + d * t - a).norm_squared()).powi(2);
    let n = ((hi - lo) / step).round() as usize;
    let vals: Vec<f64> = (0..=n).map(|i| f(lo + step * i as f64)).collect();
    (1..n).filter(|&i| vals[i] <= vals[i - 1] && vals[i] < vals[i + 1]).map(|i| lo + step * i as f64).collect()
}
