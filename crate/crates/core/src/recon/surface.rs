use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{KdTree, ReconError};
use crate::geometry::Side;

/// Midsagittal plane in the volume frame. `normal` is the APP +X (LR) axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SagittalPlane {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
}

impl SagittalPlane {
    /// Signed LR offset of `p` from the plane (mm, along APP +X).
    pub fn lr_offset(&self, p: &Point3<f64>) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    /// True when `p` lies on the operative side of the midline.
    pub fn is_ipsilateral(&self, p: &Point3<f64>, side: Side) -> bool {
        side.lateral_sign() * self.lr_offset(p) > 0.0
    }
}

/// Pelvis surface as a dense point cloud (volume frame) with an exact
/// nearest-neighbor index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SurfaceRaw", into = "SurfaceRaw")]
pub struct SurfaceModel {
    tree: KdTree,
    sagittal: SagittalPlane,
}

#[derive(Serialize, Deserialize)]
struct SurfaceRaw {
    sagittal_plane: SagittalPlane,
    points_mm: Vec<[f64; 3]>,
}

impl SurfaceModel {
    pub fn new(points: Vec<Point3<f64>>, sagittal: SagittalPlane) -> Result<Self, ReconError> {
        if points.is_empty() {
            return Err(ReconError::EmptySurface);
        }
        let n = sagittal.normal.norm();
        if !(n > 0.0) {
            return Err(ReconError::EmptySurface);
        }
        let sagittal = SagittalPlane {
            point: sagittal.point,
            normal: sagittal.normal / n,
        };
        Ok(Self {
            tree: KdTree::build(points),
            sagittal,
        })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        self.tree.points()
    }

    pub fn sagittal_plane(&self) -> &SagittalPlane {
        &self.sagittal
    }

    /// Distance from `p` to the nearest surface sample (mm).
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.tree.nearest(p).map(|(_, d)| d).unwrap_or(f64::INFINITY)
    }
}

impl TryFrom<SurfaceRaw> for SurfaceModel {
    type Error = ReconError;
    fn try_from(raw: SurfaceRaw) -> Result<Self, Self::Error> {
        SurfaceModel::new(raw.points_mm.into_iter().map(Point3::from).collect(), raw.sagittal_plane)
    }
}

impl From<SurfaceModel> for SurfaceRaw {
    fn from(s: SurfaceModel) -> Self {
        SurfaceRaw {
            sagittal_plane: s.sagittal.clone(),
            points_mm: s.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }
}
