use nalgebra::{DVector, Point2, Point3};
use serde::{Deserialize, Serialize};

use super::PoseError;
use crate::geometry::{relative_fragment_pose, AnatomicalFrame, CArmCamera, RigidTransform};
use crate::optim::{levenberg_marquardt, perturb_pose, LmOptions};
use crate::recon::centroid;

/// A BB assigned to a detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BbMatch {
    pub bb: usize,
    pub det: usize,
    /// Reprojection distance (px) at matching time.
    pub distance: f64,
}

/// Greedy one-to-one assignment in ascending reprojection distance; pairs
/// farther than `gate_px` are never made. Sorted by BB index.
pub fn match_by_reprojection(
    pose: &RigidTransform,
    bbs: &[Point3<f64>],
    dets: &[Point2<f64>],
    camera: &CArmCamera,
    gate_px: f64,
) -> Vec<BbMatch> {
    let mut pairs = Vec::new();
    for (i, b) in bbs.iter().enumerate() {
        let Ok(px) = camera.project_carm(&pose.apply(b)) else { continue };
        for (j, d) in dets.iter().enumerate() {
            let dist = (d - px).norm();
            if dist <= gate_px {
                pairs.push(BbMatch { bb: i, det: j, distance: dist });
            }
        }
    }
    pairs.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.bb.cmp(&b.bb)).then(a.det.cmp(&b.det)));
    let mut bb_used = vec![false; bbs.len()];
    let mut det_used = vec![false; dets.len()];
    let mut out = Vec::new();
    for p in pairs {
        if bb_used[p.bb] || det_used[p.det] {
            continue;
        }
        bb_used[p.bb] = true;
        det_used[p.det] = true;
        out.push(p);
    }
    out.sort_by_key(|m| m.bb);
    out
}

pub fn mean_distance(matches: &[BbMatch]) -> f64 {
    if matches.is_empty() {
        return f64::INFINITY;
    }
    matches.iter().map(|m| m.distance).sum::<f64>() / matches.len() as f64
}

/// Residual sum of squares of refined fits and its degrees of freedom
/// (two per match, minus six pose parameters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualNoise {
    pub rss: f64,
    pub dof: usize,
}

impl ResidualNoise {
    /// From the matches of a fit that was refined on exactly those matches.
    pub fn from_matches(matches: &[BbMatch]) -> Self {
        let dof = (2 * matches.len()).saturating_sub(6);
        let rss = if dof > 0 { matches.iter().map(|m| m.distance * m.distance).sum() } else { 0.0 };
        Self { rss, dof }
    }

    pub fn pooled(self, other: Self) -> Self {
        Self {
            rss: self.rss + other.rss,
            dof: self.dof + other.dof,
        }
    }

    /// Per-coordinate variance (px²), if any redundancy exists.
    pub fn variance(&self) -> Option<f64> {
        (self.dof > 0).then(|| self.rss / self.dof as f64)
    }
}

/// Penalize the translation of the relative fragment motion.
#[derive(Debug, Clone)]
pub struct Regularization<'a> {
    pub weight: f64,
    pub ilium_pose: &'a RigidTransform,
    pub app: &'a AnatomicalFrame,
}

/// Optional extras for [`refine_pose`].
#[derive(Debug, Clone, Default)]
pub struct RefineOptions<'a> {
    pub regularization: Option<Regularization<'a>>,
    /// Box bounds on the 6-vector (rotation degrees about the C-arm axes,
    /// translation mm), centered on the initial pose.
    pub bounds: Option<[f64; 6]>,
}

/// Local reprojection refinement over matched BBs.
///
/// Two matches return the initial pose unchanged; fewer is an error. The
/// objective never increases.
pub fn refine_pose(
    initial: &RigidTransform,
    bbs: &[Point3<f64>],
    matches: &[BbMatch],
    dets: &[Point2<f64>],
    camera: &CArmCamera,
    opts: &RefineOptions,
) -> Result<RigidTransform, PoseError> {
    match matches.len() {
        0 | 1 => return Err(PoseError::InsufficientMatches(matches.len())),
        2 => return Ok(initial.clone()),
        _ => {}
    }
    let center = initial.apply(&centroid(bbs));
    let n_res = 2 * matches.len() + if opts.regularization.is_some() { 3 } else { 0 };
    let residuals = |x: &DVector<f64>| {
        let pose = perturb_pose(initial, &center, x.as_slice());
        let mut r = DVector::zeros(n_res);
        for (k, m) in matches.iter().enumerate() {
            let (rx, ry) = match camera.project_carm(&pose.apply(&bbs[m.bb])) {
                Ok(p) => (p.x - dets[m.det].x, p.y - dets[m.det].y),
                Err(_) => (f64::INFINITY, f64::INFINITY),
            };
            r[2 * k] = rx;
            r[2 * k + 1] = ry;
        }
        if let Some(reg) = &opts.regularization {
            let base = 2 * matches.len();
            match relative_fragment_pose(reg.ilium_pose, &pose, reg.app) {
                Ok(delta) => {
                    let t = delta.translation() * reg.weight.sqrt();
                    r[base] = t.x;
                    r[base + 1] = t.y;
                    r[base + 2] = t.z;
                }
                Err(_) => r.rows_mut(base, 3).fill(f64::INFINITY),
            }
        }
        r
    };
    let bounds = opts.bounds.map(|b| {
        let hi = DVector::from_vec(vec![
            b[0].to_radians(),
            b[1].to_radians(),
            b[2].to_radians(),
            b[3],
            b[4],
            b[5],
        ]);
        (-hi.clone(), hi)
    });
    let lm = LmOptions {
        bounds,
        ..Default::default()
    };
    let res = levenberg_marquardt(residuals, DVector::zeros(6), &lm);
    Ok(perturb_pose(initial, &center, res.x.as_slice()))
}
