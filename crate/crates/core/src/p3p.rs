//! Depth-sampled P3P solver.
//!
//! The first model point is placed at a fixed fraction `r` of the way along
//! its back-projected ray. The other two are placed on their rays where the
//! distance to the first point best matches the model length, and the
//! resulting triangle is kept only when its shape agrees with the model.
//! Survivors are registered to the model and polished on reprojection error.

use nalgebra::{DVector, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{horn, CArmCamera, Frame, RigidTransform};
use crate::optim::{levenberg_marquardt, perturb_pose, LmOptions};

/// Step between consecutive source-to-detector ratios.
pub const RATIO_STEP: f64 = 0.003125;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum P3PError {
    #[error("model points are colinear")]
    ColinearModel,
    #[error("invalid P3P config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P3PConfig {
    /// Source-to-detector fractions tried for the first model point.
    pub ratios: Vec<f64>,
    /// Relative shape tolerance.
    pub epsilon: f64,
    /// Admissible back-projection interval for `t`.
    pub t_bounds: [f64; 2],
    /// Maximum reprojection distance (px) of a returned pose.
    pub pixel_tol: f64,
    /// Also solve for the exact ratio between adjacent grid ratios where
    /// the third length crosses the model length but neither grid ratio
    /// meets the shape tolerance.
    #[serde(default)]
    pub refine_brackets: bool,
}

impl Default for P3PConfig {
    fn default() -> Self {
        Self {
            ratios: ratio_grid(0.6, 129),
            epsilon: 0.01,
            t_bounds: [0.6, 1.0],
            pixel_tol: 0.5,
            refine_brackets: false,
        }
    }
}

impl P3PConfig {
    pub fn with_ratios(ratios: Vec<f64>) -> Self {
        Self { ratios, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), P3PError> {
        let [lo, hi] = self.t_bounds;
        if !(lo > 0.0 && lo < hi) {
            return Err(P3PError::InvalidConfig("t_bounds must satisfy 0 < lo < hi".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(P3PError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.ratios.iter().any(|r| !(*r >= lo && *r <= hi)) {
            return Err(P3PError::InvalidConfig("ratios must lie within t_bounds".into()));
        }
        Ok(())
    }
}

/// `count` ratios starting at `start`, spaced by [`RATIO_STEP`].
pub fn ratio_grid(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + RATIO_STEP * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P3PSolution {
    /// Model (volume) to C-arm.
    pub pose: RigidTransform,
    pub ratio: f64,
    pub t2: f64,
    pub t3: f64,
    /// Largest relative deviation of the three back-projected lengths.
    pub residual: f64,
    /// Largest reprojection distance of the three model points (px).
    pub reprojection_px: f64,
}

/// A root of the length-matching problem on one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthRoot {
    pub t: f64,
    /// Distance from the anchor point achieved at `t`.
    pub length: f64,
}

/// Minimizers over `t` of `(l² − |origin + t·dir − anchor|²)²`.
///
/// Writing the squared distance as `|d|²(t − t₀)² + h²`, the objective is
/// zero at `t₀ ± √(l² − h²)/|d|` whenever the sphere of radius `l` reaches
/// the line, and otherwise is minimized at the foot point `t₀`.
pub fn min_length_roots(origin: &Point3<f64>, dir: &Vector3<f64>, anchor: &Point3<f64>, l: f64) -> Vec<LengthRoot> {
    let dd = dir.norm_squared();
    if !(dd > 0.0) {
        return Vec::new();
    }
    let w = anchor - origin;
    let t0 = w.dot(dir) / dd;
    let h2 = (w.norm_squared() - t0 * t0 * dd).max(0.0);
    let disc = l * l - h2;
    let at = |t: f64| LengthRoot {
        t,
        length: (origin + dir * t - anchor).norm(),
    };
    if disc > 1e-12 * l * l {
        let half = (disc / dd).sqrt();
        vec![at(t0 - half), at(t0 + half)]
    } else {
        vec![at(t0)]
    }
}

fn carm_ray(camera: &CArmCamera, px: &Point2<f64>) -> Vector3<f64> {
    camera.detector_point(px) - camera.source()
}

/// All poses consistent with model triangle `model` seen at `dets`.
///
/// Output order: ratio (config order), then the root index for the second
/// point, then for the third. Bracketed solutions follow the grid solutions
/// of the lower end of their bracket.
pub fn solve_p3p(
    model: &[Point3<f64>; 3],
    dets: &[Point2<f64>; 3],
    camera: &CArmCamera,
    config: &P3PConfig,
) -> Result<Vec<P3PSolution>, P3PError> {
    let (e1, e2) = (model[1] - model[0], model[2] - model[0]);
    if e1.cross(&e2).norm() <= 1e-9 * e1.norm() * e2.norm() {
        return Err(P3PError::ColinearModel);
    }
    let l12 = e1.norm();
    let l13 = e2.norm();
    let l23 = (model[2] - model[1]).norm();
    let s = *camera.source();
    let d = [carm_ray(camera, &dets[0]), carm_ray(camera, &dets[1]), carm_ray(camera, &dets[2])];
    let [lo, hi] = config.t_bounds;
    let (rmin, rmax) = (1.0 - config.epsilon, 1.0 + config.epsilon);
    let in_bounds = |t: f64| t >= lo && t <= hi;

    let geom = Triangle { model, dets, camera, d, s, l: [l12, l13, l23] };
    let mut per_ratio = Vec::with_capacity(config.ratios.len());
    let mut hits = Vec::with_capacity(config.ratios.len());
    for &ratio in &config.ratios {
        let mut hit = [[false; 2]; 2];
        let mut sols = Vec::new();
        for (i2, r2) in min_length_roots(&s, &d[1], &(s + d[0] * ratio), l12).into_iter().enumerate() {
            if !in_bounds(r2.t) || !(rmin..=rmax).contains(&(r2.length / l12)) {
                continue;
            }
            for (i3, r3) in min_length_roots(&s, &d[2], &(s + d[0] * ratio), l13).into_iter().enumerate() {
                if !in_bounds(r3.t) || !(rmin..=rmax).contains(&(r3.length / l13)) {
                    continue;
                }
                if let Some(sol) = geom.solution(ratio, r2, r3, config) {
                    hit[i2][i3] = true;
                    sols.push(sol);
                }
            }
        }
        per_ratio.push(sols);
        hits.push(hit);
    }
    let mut out = Vec::new();
    for k in 0..per_ratio.len() {
        out.append(&mut per_ratio[k]);
        if !config.refine_brackets || k + 1 == per_ratio.len() {
            continue;
        }
        for (i2, i3) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            // A grid hit at either end already polishes onto this root.
            if hits[k][i2][i3] || hits[k + 1][i2][i3] {
                continue;
            }
            if let Some(sol) = geom.bracket(config.ratios[k], config.ratios[k + 1], i2, i3, config) {
                out.push(sol);
            }
        }
    }
    Ok(out)
}

/// Fixed inputs of one solve.
struct Triangle<'a> {
    model: &'a [Point3<f64>; 3],
    dets: &'a [Point2<f64>; 3],
    camera: &'a CArmCamera,
    d: [Vector3<f64>; 3],
    s: Point3<f64>,
    l: [f64; 3],
}

impl Triangle<'_> {
    /// Shape test on the third length, then register, polish and gate on
    /// reprojection.
    fn solution(&self, ratio: f64, r2: LengthRoot, r3: LengthRoot, config: &P3PConfig) -> Option<P3PSolution> {
        let (rmin, rmax) = (1.0 - config.epsilon, 1.0 + config.epsilon);
        let b1 = self.s + self.d[0] * ratio;
        let b2 = self.s + self.d[1] * r2.t;
        let b3 = self.s + self.d[2] * r3.t;
        let q = [r2.length / self.l[0], r3.length / self.l[1], (b3 - b2).norm() / self.l[2]];
        if !(rmin..=rmax).contains(&q[2]) {
            return None;
        }
        let (rot, trans) = horn(self.model, &[b1, b2, b3]).ok()?;
        let initial = RigidTransform::new(rot, trans, Frame::Volume, Frame::CArm).expect("registration yields a rotation");
        let pose = polish(&initial, self.model, self.dets, self.camera);
        let reproj = max_reprojection(&pose, self.model, self.dets, self.camera);
        if reproj > config.pixel_tol {
            return None;
        }
        Some(P3PSolution {
            pose,
            ratio,
            t2: r2.t,
            t3: r3.t,
            residual: q.iter().map(|q| (q - 1.0).abs()).fold(0.0, f64::max),
            reprojection_px: reproj,
        })
    }

    /// Roots `(i2, i3)` at `ratio` when both rays meet their spheres twice,
    /// with the signed third-length deviation.
    fn branch(&self, ratio: f64, i2: usize, i3: usize) -> Option<(LengthRoot, LengthRoot, f64)> {
        let b1 = self.s + self.d[0] * ratio;
        let r2 = min_length_roots(&self.s, &self.d[1], &b1, self.l[0]);
        let r3 = min_length_roots(&self.s, &self.d[2], &b1, self.l[1]);
        if r2.len() != 2 || r3.len() != 2 {
            return None;
        }
        let (r2, r3) = (r2[i2], r3[i3]);
        let q23 = ((self.s + self.d[2] * r3.t) - (self.s + self.d[1] * r2.t)).norm() / self.l[2];
        Some((r2, r3, q23 - 1.0))
    }

    /// Bisect `[lo, hi]` for the ratio where branch `(i2, i3)` matches the
    /// third length exactly.
    ///
    /// When the branch exists at only one end (a ray becomes tangent to its
    /// sphere inside the bracket), the bracket is shrunk to where it exists.
    fn bracket(&self, lo: f64, hi: f64, i2: usize, i3: usize, config: &P3PConfig) -> Option<P3PSolution> {
        let exists = |r: f64| self.branch(r, i2, i3).is_some();
        let (lo, hi) = match (exists(lo), exists(hi)) {
            (true, true) => (lo, hi),
            (true, false) => (lo, self.edge(lo, hi, &exists)),
            (false, true) => (self.edge(hi, lo, &exists), hi),
            (false, false) => return None,
        };
        let (_, _, g_lo) = self.branch(lo, i2, i3)?;
        let (_, _, g_hi) = self.branch(hi, i2, i3)?;
        if g_lo.signum() == g_hi.signum() {
            return None;
        }
        let (mut a, mut b, mut ga) = (lo, hi, g_lo);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let (_, _, gm) = self.branch(m, i2, i3)?;
            if gm.signum() == ga.signum() {
                (a, ga) = (m, gm);
            } else {
                b = m;
            }
        }
        let ratio = 0.5 * (a + b);
        let (r2, r3, _) = self.branch(ratio, i2, i3)?;
        let [tlo, thi] = config.t_bounds;
        if [ratio, r2.t, r3.t].iter().any(|t| *t < tlo || *t > thi) {
            return None;
        }
        self.solution(ratio, r2, r3, config)
    }

    /// Last point from `inside` toward `outside` where `exists` holds.
    fn edge(&self, mut inside: f64, mut outside: f64, exists: &dyn Fn(f64) -> bool) -> f64 {
        for _ in 0..60 {
            let m = 0.5 * (inside + outside);
            if exists(m) {
                inside = m;
            } else {
                outside = m;
            }
        }
        inside
    }
}

fn max_reprojection(pose: &RigidTransform, model: &[Point3<f64>], dets: &[Point2<f64>], camera: &CArmCamera) -> f64 {
    model
        .iter()
        .zip(dets)
        .map(|(m, b)| match camera.project_carm(&pose.apply(m)) {
            Ok(p) => (p - b).norm(),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Drive the three reprojection residuals to zero, starting from the
/// shape-registered pose.
fn polish(initial: &RigidTransform, model: &[Point3<f64>; 3], dets: &[Point2<f64>; 3], camera: &CArmCamera) -> RigidTransform {
    let center = initial.apply(&crate::recon::centroid(model));
    let residuals = |x: &DVector<f64>| {
        let pose = perturb_pose(initial, &center, x.as_slice());
        let mut r = DVector::zeros(6);
        for (k, (m, b)) in model.iter().zip(dets).enumerate() {
            let (rx, ry) = match camera.project_carm(&pose.apply(m)) {
                Ok(p) => (p.x - b.x, p.y - b.y),
                Err(_) => (f64::INFINITY, f64::INFINITY),
            };
            r[2 * k] = rx;
            r[2 * k + 1] = ry;
        }
        r
    };
    let opts = LmOptions {
        max_iters: 50,
        step_tol: 1e-12,
        ..Default::default()
    };
    let res = levenberg_marquardt(residuals, DVector::zeros(6), &opts);
    perturb_pose(initial, &center, res.x.as_slice())
}
