use std::cmp::Ordering;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::SurfaceModel;
use crate::detect::DetectionSet;
use crate::geometry::{triangulate, CArmCamera};
use crate::Execution;

/// Default surface gate (mm).
pub const DEFAULT_SURFACE_GATE_MM: f64 = 10.0;

/// Order in which paired three-view candidates are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrder {
    /// Distance of the two-view point's projection to the view-3 detection.
    ViewThreeDistance,
    /// Reprojection RMS of the three-view triangulation. Unlike the view-3
    /// distance it also penalizes view-1/view-2 rays that do not meet, which
    /// keeps wrong pairs from overtaking true ones when the cameras carry a
    /// common calibration offset.
    #[default]
    ThreeViewResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// Maximum distance of a triangulated BB to the pelvis surface (mm).
    pub surface_gate_mm: f64,
    pub order: CandidateOrder,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            surface_gate_mm: DEFAULT_SURFACE_GATE_MM,
            order: CandidateOrder::default(),
        }
    }
}

/// A hypothesized BB correspondence across views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceCandidate {
    /// Detection index in view 1.
    pub p: usize,
    /// Detection index in view 2.
    pub q: usize,
    /// Detection index in view 3, once paired.
    pub r: Option<usize>,
    /// Two-view triangulation (volume frame).
    pub x: Point3<f64>,
    /// Reprojection distance of `x` to detection `r` in view 3 (px).
    pub d: f64,
    /// Reprojection RMS over all three views of the `(p, q, r)`
    /// triangulation (px); infinite when it cannot be triangulated.
    pub residual: f64,
}

/// A BB reconstructed from three views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedBb {
    pub position: Point3<f64>,
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

/// All view-1 × view-2 pairs whose triangulation lies within `gate_mm` of the surface.
pub fn candidate_two_view(
    p1: &DetectionSet,
    p2: &DetectionSet,
    cams: [&CArmCamera; 2],
    surface: &SurfaceModel,
    gate_mm: f64,
    exec: Execution,
) -> Vec<CorrespondenceCandidate> {
    let n2 = p2.len();
    let per_pair = exec.map_range(p1.len() * n2, |k| {
        let (p, q) = (k / n2, k % n2);
        let obs = [(cams[0], p1.detections[p].pos), (cams[1], p2.detections[q].pos)];
        let x = triangulate(&obs).ok()?;
        (surface.distance(&x) < gate_mm).then_some(CorrespondenceCandidate {
            p,
            q,
            r: None,
            x,
            d: 0.0,
            residual: 0.0,
        })
    });
    per_pair.into_iter().flatten().collect()
}

fn three_view_residual(obs: &[(&CArmCamera, Point2<f64>); 3]) -> f64 {
    let Ok(y) = triangulate(obs) else { return f64::INFINITY };
    let mut ss = 0.0;
    for (cam, px) in obs {
        match cam.project(&y) {
            Ok(p) => ss += (p - px).norm_squared(),
            Err(_) => return f64::INFINITY,
        }
    }
    (ss / 3.0).sqrt()
}

/// Pair every two-view candidate with every view-3 detection, recording the
/// view-3 distance and the three-view residual. Sorted by the key `order`
/// selects, then by `d`, then by `(p, q, r)`.
pub fn three_view_candidates(
    cands: &[CorrespondenceCandidate],
    views: [&DetectionSet; 3],
    cams: [&CArmCamera; 3],
    order: CandidateOrder,
) -> Vec<CorrespondenceCandidate> {
    let mut out = Vec::with_capacity(cands.len() * views[2].len());
    for c in cands {
        let Ok(proj) = cams[2].project(&c.x) else { continue };
        for (r, det) in views[2].detections.iter().enumerate() {
            let residual = match order {
                CandidateOrder::ViewThreeDistance => 0.0,
                CandidateOrder::ThreeViewResidual => three_view_residual(&[
                    (cams[0], views[0].detections[c.p].pos),
                    (cams[1], views[1].detections[c.q].pos),
                    (cams[2], det.pos),
                ]),
            };
            out.push(CorrespondenceCandidate {
                r: Some(r),
                d: (proj - det.pos).norm(),
                residual,
                ..c.clone()
            });
        }
    }
    out.sort_by(|a, b| {
        let primary = match order {
            CandidateOrder::ViewThreeDistance => Ordering::Equal,
            CandidateOrder::ThreeViewResidual => a.residual.total_cmp(&b.residual),
        };
        primary
            .then(a.d.total_cmp(&b.d))
            .then(a.p.cmp(&b.p))
            .then(a.q.cmp(&b.q))
            .then(a.r.cmp(&b.r))
    });
    out
}

/// Greedy three-view resolution.
///
/// Candidates are visited in the order `config.order` selects. A candidate is
/// accepted when none of its detections has been used yet and its
/// three-view re-triangulation still passes the surface gate. Stops early
/// once any view's detections are all consumed.
pub fn resolve_three_view(
    cands: &[CorrespondenceCandidate],
    views: [&DetectionSet; 3],
    cams: [&CArmCamera; 3],
    surface: &SurfaceModel,
    config: &ReconConfig,
) -> Vec<ReconstructedBb> {
    let ordered = three_view_candidates(cands, views, cams, config.order);
    let mut used = [vec![false; views[0].len()], vec![false; views[1].len()], vec![false; views[2].len()]];
    let mut counts = [0usize; 3];
    let mut out = Vec::new();
    let exhausted = |counts: &[usize; 3]| (0..3).any(|v| counts[v] == views[v].len());
    if exhausted(&counts) {
        return out;
    }
    for c in &ordered {
        let r = c.r.expect("three-view candidate");
        if used[0][c.p] || used[1][c.q] || used[2][r] {
            continue;
        }
        let obs = [
            (cams[0], views[0].detections[c.p].pos),
            (cams[1], views[1].detections[c.q].pos),
            (cams[2], views[2].detections[r].pos),
        ];
        let Ok(y) = triangulate(&obs) else { continue };
        if surface.distance(&y) >= config.surface_gate_mm {
            continue;
        }
        used[0][c.p] = true;
        used[1][c.q] = true;
        used[2][r] = true;
        counts.iter_mut().for_each(|n| *n += 1);
        out.push(ReconstructedBb {
            position: y,
            p: c.p,
            q: c.q,
            r,
        });
        if exhausted(&counts) {
            break;
        }
    }
    out
}
