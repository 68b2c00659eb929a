//! Three-view BB reconstruction: cross-view correspondence search pruned by
//! distance to the pelvis surface, greedy three-view resolution, and
//! ilium/fragment labeling.

mod constellation;
mod correspond;
mod kdtree;
mod label;
mod surface;

pub use constellation::{
    centroid, max_triangle_area, min_triangle_area, triangle_area, Constellation, ConstellationLabel,
    MIN_TRIANGLE_AREA_MM2,
};
pub use correspond::{
    candidate_two_view, resolve_three_view, three_view_candidates, CandidateOrder, CorrespondenceCandidate, ReconConfig,
    ReconstructedBb, DEFAULT_SURFACE_GATE_MM,
};
pub use kdtree::KdTree;
pub use label::{kmeans2, label_constellations};
pub use surface::{SagittalPlane, SurfaceModel};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetectionSet;
use crate::geometry::{CArmCamera, Side};
use crate::Execution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconError {
    #[error("surface model is empty or has no valid sagittal plane")]
    EmptySurface,
    #[error("too few BBs ({0}) to form a constellation")]
    TooFewBbs(usize),
    #[error("constellation BBs are colinear")]
    ColinearConstellation,
    #[error("clusters are not separated enough to label")]
    DegenerateClusters,
}

/// Output of [`reconstruct`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// Every resolved BB, in acceptance order.
    pub bbs: Vec<ReconstructedBb>,
    pub ilium: Constellation,
    pub fragment: Constellation,
}

/// Full reconstruction from three views: the first two seed the
/// triangulation and the third verifies.
pub fn reconstruct(
    views: [&DetectionSet; 3],
    cams: [&CArmCamera; 3],
    surface: &SurfaceModel,
    side: Side,
    iliac_reference: &Point3<f64>,
    config: &ReconConfig,
    exec: Execution,
) -> Result<Reconstruction, ReconError> {
    let cands = candidate_two_view(views[0], views[1], [cams[0], cams[1]], surface, config.surface_gate_mm, exec);
    let bbs = resolve_three_view(&cands, views, cams, surface, config);
    let pts: Vec<Point3<f64>> = bbs.iter().map(|b| b.position).collect();
    let (ilium, fragment) = label_constellations(&pts, surface, side, iliac_reference)?;
    Ok(Reconstruction { bbs, ilium, fragment })
}
