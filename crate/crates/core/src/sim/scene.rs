use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{AnatomicalFrame, Frame, LceLandmarks, RigidTransform, Side};
use crate::recon::{
    centroid, min_triangle_area, Constellation, ConstellationLabel, SagittalPlane, SurfaceModel,
};

/// Current scene JSON schema version.
pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Distribution of the true fragment motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub max_rotation_deg: f64,
    pub max_translation_mm: f64,
    /// Spread of the rotation axis around LR; 0 gives pure LR rotations.
    pub axis_spread: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 30.0,
            max_translation_mm: 15.0,
            axis_spread: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub side: Side,
    pub samples_per_patch: usize,
    /// LR distance from the femoral head center to the midsagittal plane (mm).
    pub midline_offset_mm: f64,
    /// Add a mirrored contralateral hemipelvis to the surface.
    pub contralateral_surface: bool,
    pub bbs_per_constellation: usize,
    pub bb_diameter_mm: f64,
    /// Radius around a seed point within which one constellation's BBs are placed (mm).
    pub ilium_spread_mm: f64,
    pub fragment_spread_mm: f64,
    /// Fragment seeds are drawn within this distance of the femoral head center (mm).
    pub fragment_seed_radius_mm: f64,
    pub min_bb_separation_mm: f64,
    /// Lower bound on every BB triple's area (mm²).
    pub min_triple_area_mm2: f64,
    pub min_centroid_separation_mm: f64,
    /// Per-axis bound of the random APP-to-volume rotation (degrees).
    pub app_rotation_deg: f64,
    pub app_translation_mm: [f64; 3],
    pub motion: MotionConfig,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            side: Side::Left,
            samples_per_patch: 3000,
            midline_offset_mm: 88.0,
            contralateral_surface: true,
            bbs_per_constellation: 4,
            bb_diameter_mm: 1.5,
            ilium_spread_mm: 18.0,
            fragment_spread_mm: 15.0,
            fragment_seed_radius_mm: 28.0,
            min_bb_separation_mm: 9.0,
            min_triple_area_mm2: 15.0,
            min_centroid_separation_mm: 50.0,
            app_rotation_deg: 10.0,
            app_translation_mm: [150.0, 120.0, 200.0],
            motion: MotionConfig::default(),
            max_attempts: 2000,
        }
    }
}

/// Axis-aligned superellipsoid in canonical (left-side) APP coordinates.
#[derive(Debug, Clone, Copy)]
struct Patch {
    center: [f64; 3],
    semi_axes: [f64; 3],
    /// Shape exponent (< 1 is boxy, 1 is an ellipsoid).
    exponent: f64,
}

const ILIUM_WING: Patch = Patch { center: [-15.0, 75.0, -10.0], semi_axes: [10.0, 55.0, 55.0], exponent: 0.7 };
const ACETABULUM: Patch = Patch { center: [5.0, 15.0, 0.0], semi_axes: [28.0, 32.0, 30.0], exponent: 0.8 };
const PUBIC_RAMUS: Patch = Patch { center: [-45.0, -5.0, 25.0], semi_axes: [38.0, 9.0, 9.0], exponent: 0.9 };
const ISCHIUM: Patch = Patch { center: [-5.0, -50.0, -20.0], semi_axes: [14.0, 32.0, 14.0], exponent: 0.9 };

/// Patch index of the acetabular block within [`Scene::patch_ranges`].
pub const ACETABULUM_PATCH: usize = 1;

fn spow(x: f64, e: f64) -> f64 {
    x.signum() * x.abs().powf(e)
}

impl Patch {
    fn sample(&self, rng: &mut ChaCha8Rng, n: usize, lateral: f64) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(-1.0..1.0);
                let eta = u.asin();
                let omega = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let e = self.exponent;
                let x = self.semi_axes[0] * spow(eta.cos(), e) * spow(omega.cos(), e);
                let y = self.semi_axes[1] * spow(eta.cos(), e) * spow(omega.sin(), e);
                let z = self.semi_axes[2] * spow(eta.sin(), e);
                Point3::new(lateral * (self.center[0] + x), self.center[1] + y, self.center[2] + z)
            })
            .collect()
    }

    fn center(&self, lateral: f64) -> Point3<f64> {
        Point3::new(lateral * self.center[0], self.center[1], self.center[2])
    }
}

/// A synthetic hemipelvis with two BB constellations.
///
/// Constellations and landmarks are preoperative; the fragment motion is
/// carried separately in `true_delta_app`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub schema_version: u32,
    pub seed: u64,
    pub side: Side,
    pub bb_diameter_mm: f64,
    pub surface: SurfaceModel,
    /// Index ranges of each surface patch in `surface.points()`, ipsilateral first.
    pub patch_ranges: Vec<(usize, usize)>,
    pub app: AnatomicalFrame,
    pub ilium_bbs: Constellation,
    pub fragment_bbs: Constellation,
    /// Mirror images of the two constellations on the contralateral side (volume frame).
    pub contralateral_bbs: Vec<Point3<f64>>,
    pub lce_landmarks: LceLandmarks,
    pub iliac_reference: Point3<f64>,
    pub true_delta_app: RigidTransform,
}

fn rotation_deg(rx: f64, ry: f64, rz: f64) -> Rotation3<f64> {
    Rotation3::from_euler_angles(rx.to_radians(), ry.to_radians(), rz.to_radians())
}

/// Choose `count` points of `pool` near a random seed satisfying spacing
/// and triangle-area constraints.
fn pick_constellation(
    rng: &mut ChaCha8Rng,
    pool: &[Point3<f64>],
    seed_ok: impl Fn(&Point3<f64>) -> bool,
    spread: f64,
    count: usize,
    cfg: &SceneConfig,
) -> Option<Vec<Point3<f64>>> {
    let seeds: Vec<&Point3<f64>> = pool.iter().filter(|p| seed_ok(p)).collect();
    if seeds.is_empty() {
        return None;
    }
    let seed = *seeds[rng.random_range(0..seeds.len())];
    let near: Vec<Point3<f64>> = pool.iter().filter(|p| (*p - seed).norm() <= spread).copied().collect();
    if near.len() < count {
        return None;
    }
    for _ in 0..50 {
        let mut chosen: Vec<Point3<f64>> = Vec::with_capacity(count);
        for _ in 0..20 * count {
            if chosen.len() == count {
                break;
            }
            let c = near[rng.random_range(0..near.len())];
            if chosen.iter().all(|q| (q - c).norm() >= cfg.min_bb_separation_mm) {
                chosen.push(c);
            }
        }
        if chosen.len() == count && min_triangle_area(&chosen) >= cfg.min_triple_area_mm2 {
            return Some(chosen);
        }
    }
    None
}

/// Deterministic synthetic scene for `seed`.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat = config.side.lateral_sign();
    let patches = [ILIUM_WING, ACETABULUM, PUBIC_RAMUS, ISCHIUM];

    // Surface in APP coordinates, with the contralateral mirror.
    let mut app_pts: Vec<Point3<f64>> = Vec::new();
    let mut ranges = Vec::new();
    for p in &patches {
        let start = app_pts.len();
        app_pts.extend(p.sample(&mut rng, config.samples_per_patch, lat));
        ranges.push((start, app_pts.len()));
    }
    let midline_x = -lat * config.midline_offset_mm;
    let mirror = |p: &Point3<f64>| Point3::new(2.0 * midline_x - p.x, p.y, p.z);
    let ipsi_len = app_pts.len();
    if config.contralateral_surface {
        for r in ranges.clone() {
            let start = app_pts.len();
            let mirrored: Vec<Point3<f64>> = app_pts[r.0..r.1].iter().map(mirror).collect();
            app_pts.extend(mirrored);
            ranges.push((start, app_pts.len()));
        }
    }

    let r = config.app_rotation_deg;
    let rot = rotation_deg(rng.random_range(-r..=r), rng.random_range(-r..=r), rng.random_range(-r..=r));
    let trans = Vector3::from(config.app_translation_mm) + Vector3::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
    );
    let app_to_volume = RigidTransform::from_rotation(&rot, trans, Frame::App, Frame::Volume);
    let app = AnatomicalFrame::new(app_to_volume.clone()).expect("APP to volume frames");

    // Constellations, chosen in APP coordinates.
    let wing = &app_pts[ranges[0].0..ranges[0].1];
    let acet = &app_pts[ranges[1].0..ranges[1].1];
    let wing_c = ILIUM_WING.center(lat);
    let n = config.bbs_per_constellation;
    let mut constellations = None;
    for _ in 0..config.max_attempts {
        let Some(il) = pick_constellation(
            &mut rng,
            wing,
            |p| (p - wing_c).norm() < 40.0 && lat * (p.x - wing_c.x) > 0.0,
            config.ilium_spread_mm,
            n,
            config,
        ) else {
            continue;
        };
        let Some(fr) = pick_constellation(
            &mut rng,
            acet,
            |p| p.coords.norm() <= config.fragment_seed_radius_mm && p.y > 0.0,
            config.fragment_spread_mm,
            n,
            config,
        ) else {
            continue;
        };
        if (centroid(&il) - centroid(&fr)).norm() >= config.min_centroid_separation_mm {
            constellations = Some((il, fr));
            break;
        }
    }
    let (il_app, fr_app) = constellations.ok_or(SimError::ConstraintUnsatisfiable)?;

    let theta = rng.random_range(20.0f64..40.0).to_radians();
    let edge = Point3::new(lat * 30.0 * theta.sin(), 30.0 * theta.cos(), 0.0);
    let landmarks = LceLandmarks::new(Point3::origin(), edge)?;

    let to_vol = |pts: &[Point3<f64>]| -> Vec<Point3<f64>> { pts.iter().map(|p| app_to_volume.apply(p)).collect() };
    let contra: Vec<Point3<f64>> = il_app.iter().chain(&fr_app).map(|p| app_to_volume.apply(&mirror(p))).collect();
    let plane = SagittalPlane {
        point: app_to_volume.apply(&Point3::new(midline_x, 0.0, 0.0)),
        normal: app_to_volume.apply_vector(&Vector3::x()),
    };
    let surface = SurfaceModel::new(to_vol(&app_pts), plane)?;
    debug_assert!(ipsi_len <= surface.points().len());

    Ok(Scene {
        schema_version: SCENE_SCHEMA_VERSION,
        seed,
        side: config.side,
        bb_diameter_mm: config.bb_diameter_mm,
        surface,
        patch_ranges: ranges,
        app,
        ilium_bbs: Constellation::new(ConstellationLabel::Ilium, to_vol(&il_app))?,
        fragment_bbs: Constellation::new(ConstellationLabel::Fragment, to_vol(&fr_app))?,
        contralateral_bbs: contra,
        lce_landmarks: landmarks,
        iliac_reference: app_to_volume.apply(&wing_c),
        true_delta_app: RigidTransform::identity(Frame::App, Frame::App),
    })
}

/// Random fragment motion: rotation about an axis near LR, then a translation.
pub fn sample_motion(config: &MotionConfig, rng: &mut impl Rng) -> RigidTransform {
    let s = config.axis_spread;
    let axis = Vector3::new(
        if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        rng.random_range(-s..=s),
        rng.random_range(-s..=s),
    );
    let angle = rng.random_range(0.0..=config.max_rotation_deg).to_radians();
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let t = if dir.norm() > 1e-9 { dir.normalize() * rng.random_range(0.0..=config.max_translation_mm) } else { Vector3::zeros() };
    RigidTransform::from_rotation(&rot, t, Frame::App, Frame::App)
}

/// Apply an APP-frame fragment motion on top of the scene's current one.
pub fn apply_fragment_motion(scene: &Scene, delta: &RigidTransform) -> Result<Scene, SimError> {
    let mut out = scene.clone();
    out.true_delta_app = delta.compose(&scene.true_delta_app)?;
    Ok(out)
}

impl Scene {
    /// Volume-frame map `T_APP→V · Δ · T_V→APP` moving preoperative fragment points.
    pub fn fragment_motion_volume(&self) -> RigidTransform {
        self.app
            .app_to_volume()
            .compose(&self.true_delta_app)
            .and_then(|t| t.compose(&self.app.volume_to_app()))
            .expect("scene frames chain")
    }

    /// Fragment BBs after the osteotomy (volume frame).
    pub fn fragment_bbs_moved(&self) -> Vec<Point3<f64>> {
        let m = self.fragment_motion_volume();
        self.fragment_bbs.bbs().iter().map(|p| m.apply(p)).collect()
    }

    /// LCE landmarks after the osteotomy (APP frame).
    pub fn lce_landmarks_moved(&self) -> LceLandmarks {
        LceLandmarks {
            femoral_head_center: self.lce_landmarks.femoral_head_center,
            lateral_acetabular_edge: self.true_delta_app.apply(&self.lce_landmarks.lateral_acetabular_edge),
        }
    }

    /// Surface points after the osteotomy, with the acetabular patch moved.
    pub fn surface_moved(&self) -> Vec<Point3<f64>> {
        let m = self.fragment_motion_volume();
        let (a, b) = self.patch_ranges[ACETABULUM_PATCH];
        self.surface
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| if (a..b).contains(&i) { m.apply(p) } else { *p })
            .collect()
    }

    /// Aim point for the simulated views (APP frame): between the two constellations.
    pub fn view_center_app(&self) -> Point3<f64> {
        let v2a = self.app.volume_to_app();
        let il = v2a.apply(&self.ilium_bbs.centroid());
        let fr = v2a.apply(&self.fragment_bbs.centroid());
        Point3::from((il.coords + fr.coords) * 0.5)
    }

    pub fn to_json(&self) -> Result<String, SimError> {
        serde_json::to_string(self).map_err(|e| SimError::Json(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let scene: Scene = serde_json::from_str(s).map_err(|e| SimError::Json(e.to_string()))?;
        if scene.schema_version != SCENE_SCHEMA_VERSION {
            return Err(SimError::SchemaVersion(scene.schema_version));
        }
        Ok(scene)
    }
}
