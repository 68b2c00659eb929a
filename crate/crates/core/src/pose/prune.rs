use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::{IliumStageConfig, PoseError, ReferenceApPose};
use crate::geometry::{AnatomicalFrame, CArmCamera, RigidTransform};
use crate::p3p::{solve_p3p, P3PConfig};
use crate::recon::Constellation;
use crate::Execution;

fn choose3(m: u64) -> u64 {
    m * m.saturating_sub(1) * m.saturating_sub(2) / 6
}

/// Correspondence hypotheses before any pruning for a four-BB
/// constellation: `C(4,3) · n(n−1)(n−2) · ratios`.
pub fn count_max_candidates(n_detections: usize, n_ratios: usize) -> Result<u64, PoseError> {
    count_max_candidates_for(4, n_detections, n_ratios)
}

/// As [`count_max_candidates`] for a constellation of `n_bbs` BBs.
pub fn count_max_candidates_for(n_bbs: usize, n_detections: usize, n_ratios: usize) -> Result<u64, PoseError> {
    if n_detections < 3 {
        return Err(PoseError::TooFewDetections(n_detections));
    }
    let n = n_detections as u64;
    Ok(choose3(n_bbs as u64) * n * (n - 1) * (n - 2) * n_ratios as u64)
}

/// One pose hypothesis produced by the P3P enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseCandidate {
    pub pose: RigidTransform,
    /// Model BB indices; the first is the depth-sampled point.
    pub subset: [usize; 3],
    /// Detection indices matched to `subset`.
    pub dets: [usize; 3],
    pub ratio: f64,
}

/// Candidate counts through the stages of one enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub max: u64,
    pub after_p3p: u64,
    pub after_filter: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub candidates: Vec<PoseCandidate>,
    pub counts: StageCounts,
}

/// All 3-BB sub-constellations × ordered detection triples × ratios through
/// the P3P solver, keeping solutions accepted by `pose_filter`.
///
/// Output order is deterministic: subset, then detection triple
/// (lexicographic), then the solver's own order.
pub fn general_prune<F>(
    constellation: &Constellation,
    dets: &[Point2<f64>],
    camera: &CArmCamera,
    config: &P3PConfig,
    pose_filter: F,
    exec: Execution,
) -> Result<PruneOutcome, PoseError>
where
    F: Fn(&RigidTransform) -> bool + Sync + Send,
{
    let n = dets.len();
    let max = count_max_candidates_for(constellation.len(), n, config.ratios.len())?;
    let m = constellation.len();
    let mut subsets = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                subsets.push([i, j, k]);
            }
        }
    }
    let mut triples = Vec::with_capacity(n * (n - 1) * (n - 2));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a != b && a != c && b != c {
                    triples.push([a, b, c]);
                }
            }
        }
    }
    let bbs = constellation.bbs();
    let per_task = exec.map_range(subsets.len() * triples.len(), |task| {
        let subset = subsets[task / triples.len()];
        let triple = triples[task % triples.len()];
        let model: [Point3<f64>; 3] = subset.map(|i| bbs[i]);
        let obs = triple.map(|i| dets[i]);
        let sols = match solve_p3p(&model, &obs, camera, config) {
            Ok(s) => s,
            Err(_) => return (0u64, Vec::new()),
        };
        let total = sols.len() as u64;
        let kept = sols
            .into_iter()
            .filter(|s| pose_filter(&s.pose))
            .map(|s| PoseCandidate {
                pose: s.pose,
                subset,
                dets: triple,
                ratio: s.ratio,
            })
            .collect::<Vec<_>>();
        (total, kept)
    });
    let mut counts = StageCounts { max, ..Default::default() };
    let mut candidates = Vec::new();
    for (total, kept) in per_task {
        counts.after_p3p += total;
        candidates.extend(kept);
    }
    counts.after_filter = candidates.len() as u64;
    Ok(PruneOutcome { candidates, counts })
}

/// Anatomical plausibility of an ilium pose: near the reference orientation,
/// and placing at least `min_frag_in_image` fragment BBs in the image close
/// to some detection.
pub fn prune_ilium_anatomical(
    pose: &RigidTransform,
    reference: &ReferenceApPose,
    app: &AnatomicalFrame,
    fragment: &Constellation,
    dets: &[Point2<f64>],
    camera: &CArmCamera,
    config: &IliumStageConfig,
) -> bool {
    match reference.deviation(pose, app) {
        Ok(e) if e.max_abs() <= config.euler_gate_deg => {}
        _ => return false,
    }
    let mut nearest: Vec<f64> = fragment
        .bbs()
        .iter()
        .filter_map(|b| camera.project_carm(&pose.apply(b)).ok())
        .filter(|px| camera.in_image(px))
        .map(|px| dets.iter().map(|d| (d - px).norm()).fold(f64::INFINITY, f64::min))
        .collect();
    if nearest.len() < config.min_frag_in_image.max(1) {
        return false;
    }
    nearest.sort_by(f64::total_cmp);
    let k = config.min_frag_in_image.max(1);
    let mean = nearest[..k].iter().sum::<f64>() / k as f64;
    mean <= config.frag_reproj_gate_px
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts() {
        assert_eq!(count_max_candidates(13, 129).unwrap(), 885_456);
        assert_eq!(count_max_candidates(5, 33).unwrap(), 7_920);
        assert_eq!(count_max_candidates(3, 1).unwrap(), 24);
        assert!(matches!(count_max_candidates(2, 1), Err(PoseError::TooFewDetections(2))));
        assert_eq!(count_max_candidates_for(3, 3, 1).unwrap(), 6);
    }
}
