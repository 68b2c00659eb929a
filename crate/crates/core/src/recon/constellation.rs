use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::ReconError;

/// Minimum triangle area (mm²) for a triple to count as non-colinear.
pub const MIN_TRIANGLE_AREA_MM2: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstellationLabel {
    Ilium,
    Fragment,
}

/// Rigid group of BBs in the volume frame.
///
/// JSON form: `{"label": "ilium", "points_mm": [[x, y, z], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstellationRaw", into = "ConstellationRaw")]
pub struct Constellation {
    label: ConstellationLabel,
    bbs: Vec<Point3<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ConstellationRaw {
    label: ConstellationLabel,
    points_mm: Vec<[f64; 3]>,
}

impl Constellation {
    pub fn new(label: ConstellationLabel, bbs: Vec<Point3<f64>>) -> Result<Self, ReconError> {
        if bbs.len() < 3 {
            return Err(ReconError::TooFewBbs(bbs.len()));
        }
        if max_triangle_area(&bbs) <= MIN_TRIANGLE_AREA_MM2 {
            return Err(ReconError::ColinearConstellation);
        }
        Ok(Self { label, bbs })
    }

    pub fn label(&self) -> ConstellationLabel {
        self.label
    }

    pub fn bbs(&self) -> &[Point3<f64>] {
        &self.bbs
    }

    pub fn len(&self) -> usize {
        self.bbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bbs.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        centroid(&self.bbs)
    }

    /// Inter-BB distance `l_ij` (mm).
    pub fn length(&self, i: usize, j: usize) -> f64 {
        (self.bbs[i] - self.bbs[j]).norm()
    }

    /// Copy with the BB at `index` removed (e.g. a dislodged BB).
    pub fn without(&self, index: usize) -> Result<Self, ReconError> {
        let mut bbs = self.bbs.clone();
        bbs.remove(index);
        Self::new(self.label, bbs)
    }
}

pub fn centroid(points: &[Point3<f64>]) -> Point3<f64> {
    let sum = points.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords);
    Point3::from(sum / points.len().max(1) as f64)
}

pub fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn max_triangle_area(points: &[Point3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                best = best.max(triangle_area(&points[i], &points[j], &points[k]));
            }
        }
    }
    best
}

pub fn min_triangle_area(points: &[Point3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                best = best.min(triangle_area(&points[i], &points[j], &points[k]));
            }
        }
    }
    best
}

impl TryFrom<ConstellationRaw> for Constellation {
    type Error = ReconError;
    fn try_from(raw: ConstellationRaw) -> Result<Self, Self::Error> {
        Constellation::new(raw.label, raw.points_mm.into_iter().map(Point3::from).collect())
    }
}

impl From<Constellation> for ConstellationRaw {
    fn from(c: Constellation) -> Self {
        ConstellationRaw {
            label: c.label,
            points_mm: c.bbs.iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }
}
