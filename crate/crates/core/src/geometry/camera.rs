use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Frame, GeometryError, RigidTransform};

/// Source-to-detector distance of the default C-arm (mm).
pub const DEFAULT_SDD_MM: f64 = 1020.0;
/// Isotropic detector pixel spacing of the default C-arm (mm/px).
pub const DEFAULT_PIXEL_SPACING_MM: f64 = 0.194;
/// Default detector size in pixels (square).
pub const DEFAULT_IMAGE_DIM: usize = 1536;

/// Perspective X-ray geometry: point source plus planar detector.
///
/// Intrinsics are expressed in the C-arm frame. `extrinsics` maps the world
/// (volume) frame into the C-arm frame. Pixel coordinates are `(x, y) =
/// (column, row)` with integer values at pixel centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraParams", into = "CameraParams")]
pub struct CArmCamera {
    source: Point3<f64>,
    detector_origin: Point3<f64>,
    row_dir: Vector3<f64>,
    col_dir: Vector3<f64>,
    pixel_spacing: f64,
    rows: usize,
    cols: usize,
    extrinsics: RigidTransform,
    // derived
    normal: Vector3<f64>,
    sdd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraParams {
    pub source_mm: [f64; 3],
    pub detector_origin_mm: [f64; 3],
    pub detector_row_dir: [f64; 3],
    pub detector_col_dir: [f64; 3],
    pub pixel_spacing_mm: f64,
    pub rows: usize,
    pub cols: usize,
    pub extrinsics: RigidTransform,
}

impl CArmCamera {
    pub fn new(params: CameraParams) -> Result<Self, GeometryError> {
        let source = Point3::from(params.source_mm);
        let detector_origin = Point3::from(params.detector_origin_mm);
        let row_dir = Vector3::from(params.detector_row_dir);
        let col_dir = Vector3::from(params.detector_col_dir);
        let bad = |why: &str| GeometryError::InvalidCamera(why.to_string());
        if (row_dir.norm() - 1.0).abs() > 1e-9 || (col_dir.norm() - 1.0).abs() > 1e-9 {
            return Err(bad("detector directions must be unit vectors"));
        }
        if row_dir.dot(&col_dir).abs() > 1e-9 {
            return Err(bad("detector row and column directions must be orthogonal"));
        }
        if !(params.pixel_spacing_mm > 0.0) || params.rows == 0 || params.cols == 0 {
            return Err(bad("pixel spacing and image dims must be positive"));
        }
        if params.extrinsics.to_frame() != Frame::CArm {
            return Err(GeometryError::FrameMismatch {
                expected: Frame::CArm,
                found: params.extrinsics.to_frame(),
            });
        }
        let mut normal = col_dir.cross(&row_dir);
        let mut sdd = (detector_origin - source).dot(&normal);
        if sdd < 0.0 {
            normal = -normal;
            sdd = -sdd;
        }
        if sdd <= 1e-6 {
            return Err(bad("source lies on the detector plane"));
        }
        Ok(Self {
            source,
            detector_origin,
            row_dir,
            col_dir,
            pixel_spacing: params.pixel_spacing_mm,
            rows: params.rows,
            cols: params.cols,
            extrinsics: params.extrinsics,
            normal,
            sdd,
        })
    }

    /// Source at the C-arm origin, detector plane at `z = sdd`, principal
    /// point at the image center.
    pub fn centered(sdd: f64, pixel_spacing: f64, rows: usize, cols: usize, extrinsics: RigidTransform) -> Result<Self, GeometryError> {
        let ox = -((cols as f64 - 1.0) / 2.0) * pixel_spacing;
        let oy = -((rows as f64 - 1.0) / 2.0) * pixel_spacing;
        Self::new(CameraParams {
            source_mm: [0.0, 0.0, 0.0],
            detector_origin_mm: [ox, oy, sdd],
            detector_row_dir: [0.0, 1.0, 0.0],
            detector_col_dir: [1.0, 0.0, 0.0],
            pixel_spacing_mm: pixel_spacing,
            rows,
            cols,
            extrinsics,
        })
    }

    /// Default geometry (1020 mm SDD, 0.194 mm pixels, 1536 x 1536).
    pub fn default_with_extrinsics(extrinsics: RigidTransform) -> Self {
        Self::centered(DEFAULT_SDD_MM, DEFAULT_PIXEL_SPACING_MM, DEFAULT_IMAGE_DIM, DEFAULT_IMAGE_DIM, extrinsics)
            .expect("default camera geometry is valid")
    }

    pub fn with_extrinsics(&self, extrinsics: RigidTransform) -> Result<Self, GeometryError> {
        let mut p = self.params();
        p.extrinsics = extrinsics;
        Self::new(p)
    }

    pub fn params(&self) -> CameraParams {
        CameraParams {
            source_mm: self.source.coords.into(),
            detector_origin_mm: self.detector_origin.coords.into(),
            detector_row_dir: self.row_dir.into(),
            detector_col_dir: self.col_dir.into(),
            pixel_spacing_mm: self.pixel_spacing,
            rows: self.rows,
            cols: self.cols,
            extrinsics: self.extrinsics.clone(),
        }
    }

    pub fn source(&self) -> &Point3<f64> {
        &self.source
    }

    /// Unit depth axis pointing from the source toward the detector.
    pub fn depth_axis(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn source_to_detector(&self) -> f64 {
        self.sdd
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn extrinsics(&self) -> &RigidTransform {
        &self.extrinsics
    }

    pub fn principal_point(&self) -> Point2<f64> {
        let foot = self.source + self.normal * self.sdd;
        self.detector_to_pixel(&foot)
    }

    /// Project a world-frame point.
    pub fn project(&self, p: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
        self.project_carm(&self.extrinsics.apply(p))
    }

    /// Project a point already expressed in the C-arm frame.
    pub fn project_carm(&self, p: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
        let d = p - self.source;
        let depth = d.dot(&self.normal);
        if depth.abs() < 1e-6 {
            return Err(GeometryError::DegenerateRay);
        }
        if depth < 0.0 {
            return Err(GeometryError::BehindSource);
        }
        let hit = self.source + d * (self.sdd / depth);
        Ok(self.detector_to_pixel(&hit))
    }

    fn detector_to_pixel(&self, q: &Point3<f64>) -> Point2<f64> {
        let rel = q - self.detector_origin;
        Point2::new(rel.dot(&self.col_dir) / self.pixel_spacing, rel.dot(&self.row_dir) / self.pixel_spacing)
    }

    /// 3D location on the detector (C-arm frame) of a pixel.
    pub fn detector_point(&self, px: &Point2<f64>) -> Point3<f64> {
        self.detector_origin + self.col_dir * (px.x * self.pixel_spacing) + self.row_dir * (px.y * self.pixel_spacing)
    }

    /// Back-projected ray of a pixel in the world frame: (origin, unit direction).
    pub fn world_ray(&self, px: &Point2<f64>) -> (Point3<f64>, Vector3<f64>) {
        let inv = self.extrinsics.inverse();
        let dir_c = (self.detector_point(px) - self.source).normalize();
        (inv.apply(&self.source), inv.apply_vector(&dir_c))
    }

    /// Fractional position of a C-arm point along the source-to-detector axis.
    pub fn depth_ratio(&self, p: &Point3<f64>) -> f64 {
        (p - self.source).dot(&self.normal) / self.sdd
    }

    pub fn in_image(&self, px: &Point2<f64>) -> bool {
        px.x >= -0.5 && px.y >= -0.5 && px.x <= self.cols as f64 - 0.5 && px.y <= self.rows as f64 - 0.5
    }
}

impl TryFrom<CameraParams> for CArmCamera {
    type Error = GeometryError;
    fn try_from(p: CameraParams) -> Result<Self, Self::Error> {
        CArmCamera::new(p)
    }
}

impl From<CArmCamera> for CameraParams {
    fn from(c: CArmCamera) -> Self {
        c.params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> CArmCamera {
        CArmCamera::default_with_extrinsics(RigidTransform::identity(Frame::Volume, Frame::CArm))
    }

    #[test]
    fn principal_ray_hits_principal_point() {
        let c = cam();
        let pp = c.principal_point();
        assert_relative_eq!(pp.x, 767.5, epsilon = 1e-9);
        assert_relative_eq!(pp.y, 767.5, epsilon = 1e-9);
        let px = c.project(&Point3::new(0.0, 0.0, 400.0)).unwrap();
        assert_relative_eq!(px.x, pp.x, epsilon = 1e-9);
        assert_relative_eq!(px.y, pp.y, epsilon = 1e-9);
    }

    #[test]
    fn similar_triangles_offset() {
        // 10 mm lateral offset at mid depth is magnified by 1020/510.
        let c = cam();
        let pp = c.principal_point();
        let px = c.project(&Point3::new(10.0, 0.0, 510.0)).unwrap();
        let expected = 10.0 * (1020.0 / 510.0) / 0.194;
        assert_relative_eq!(px.x - pp.x, expected, epsilon = 1e-9);
        assert_relative_eq!(px.y, pp.y, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_and_behind() {
        let c = cam();
        assert_eq!(c.project(&Point3::new(0.0, 0.0, 1e-9)).unwrap_err(), GeometryError::DegenerateRay);
        assert_eq!(c.project(&Point3::new(5.0, 0.0, -10.0)).unwrap_err(), GeometryError::BehindSource);
    }

    #[test]
    fn detector_point_round_trip() {
        let c = cam();
        let px = Point2::new(100.25, 1200.5);
        let q = c.detector_point(&px);
        let back = c.project_carm(&q).unwrap();
        assert_relative_eq!(back, px, epsilon = 1e-9);
        assert_relative_eq!(c.depth_ratio(&q), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_orthogonal_detector() {
        let mut p = cam().params();
        p.detector_row_dir = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0];
        assert!(CArmCamera::new(p).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = cam();
        let js = serde_json::to_string(&c).unwrap();
        let back: CArmCamera = serde_json::from_str(&js).unwrap();
        assert_eq!(back, c);
    }
}
