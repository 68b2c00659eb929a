use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Coordinate frames a transform can map between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Preoperative CT volume frame. Constellations live here.
    Volume,
    /// C-arm frame: source at the origin, depth along +z.
    CArm,
    /// Anatomical frame: X = LR, Y = IS, Z = AP, origin at the femoral head.
    App,
}

/// Orthonormality deviation above which a rotation is re-projected onto SO(3).
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Largest deviation accepted as "a rotation with rounding noise".
const ROTATION_ACCEPT_TOL: f64 = 1e-6;

/// Rigid transform `x -> R x + t` mapping `from` coordinates into `to` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    from: Frame,
    to: Frame,
}

impl RigidTransform {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        from: Frame,
        to: Frame,
    ) -> Result<Self, GeometryError> {
        let rotation = checked_rotation(rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            rotation,
            translation,
            from,
            to,
        })
    }

    pub fn identity(from: Frame, to: Frame) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            from,
            to,
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>, from: Frame, to: Frame) -> Self {
        Self {
            rotation: *iso.rotation.to_rotation_matrix().matrix(),
            translation: iso.translation.vector,
            from,
            to,
        }
    }

    pub fn from_rotation(rotation: &Rotation3<f64>, translation: Vector3<f64>, from: Frame, to: Frame) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
            from,
            to,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn from_frame(&self) -> Frame {
        self.from
    }

    pub fn to_frame(&self) -> Frame {
        self.to
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        Isometry3::from_parts(Translation3::from(self.translation), UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
            from: self.to,
            to: self.from,
        }
    }

    /// `self ∘ other`: apply `other` first. `other` must land in the frame
    /// `self` starts from.
    pub fn compose(&self, other: &RigidTransform) -> Result<Self, GeometryError> {
        if other.to != self.from {
            return Err(GeometryError::FrameMismatch {
                expected: self.from,
                found: other.to,
            });
        }
        Ok(Self {
            rotation: reorthonormalize(self.rotation * other.rotation),
            translation: self.rotation * other.translation + self.translation,
            from: other.from,
            to: self.to,
        })
    }

    /// Rotation angle in degrees.
    pub fn rotation_angle_deg(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    pub fn with_frames(mut self, from: Frame, to: Frame) -> Self {
        self.from = from;
        self.to = to;
        self
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

fn checked_rotation(r: Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if orthonormality_error(&r) > ROTATION_ACCEPT_TOL || r.determinant() <= 0.0 {
        return Err(GeometryError::NotARotation);
    }
    Ok(reorthonormalize(r))
}

/// Nearest rotation (polar projection) when drift exceeds [`ORTHONORMAL_TOL`].
pub(crate) fn reorthonormalize(r: Matrix3<f64>) -> Matrix3<f64> {
    if orthonormality_error(&r) <= ORTHONORMAL_TOL {
        return r;
    }
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    from: Frame,
    to: Frame,
    rotation: [[f64; 3]; 3],
    translation_mm: [f64; 3],
}

impl From<RigidTransform> for RawTransform {
    fn from(t: RigidTransform) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = t.rotation[(i, j)];
            }
        }
        Self {
            from: t.from,
            to: t.to,
            rotation,
            translation_mm: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<RawTransform> for RigidTransform {
    type Error = GeometryError;

    fn try_from(raw: RawTransform) -> Result<Self, Self::Error> {
        let r = Matrix3::from_fn(|i, j| raw.rotation[i][j]);
        RigidTransform::new(r, Vector3::from(raw.translation_mm), raw.from, raw.to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample() -> RigidTransform {
        let rot = Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        RigidTransform::from_rotation(&rot, Vector3::new(1.0, -2.0, 30.0), Frame::Volume, Frame::CArm)
    }

    #[test]
    fn inverse_round_trip() {
        let t = sample();
        let id = t.inverse().compose(&t).unwrap();
        assert_eq!(id.from_frame(), Frame::Volume);
        assert_eq!(id.to_frame(), Frame::Volume);
        assert!((id.rotation() - Matrix3::identity()).amax() < 1e-12);
        assert!(id.translation().norm() < 1e-12);
    }

    #[test]
    fn compose_rejects_broken_chain() {
        let t = sample();
        let err = t.compose(&t).unwrap_err();
        assert!(matches!(err, GeometryError::FrameMismatch { .. }));
    }

    #[test]
    fn rejects_reflection_and_garbage() {
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(refl, Vector3::zeros(), Frame::App, Frame::Volume).is_err());
        let scaled = Matrix3::identity() * 1.01;
        assert!(RigidTransform::new(scaled, Vector3::zeros(), Frame::App, Frame::Volume).is_err());
    }

    #[test]
    fn slight_drift_is_reprojected() {
        let mut r = *Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix();
        r[(0, 1)] += 1e-8;
        let t = RigidTransform::new(r, Vector3::zeros(), Frame::App, Frame::Volume).unwrap();
        assert!(orthonormality_error(t.rotation()) <= ORTHONORMAL_TOL);
    }

    #[test]
    fn serde_row_major() {
        let t = sample();
        let js = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&js).unwrap();
        assert_relative_eq!(back.rotation()[(0, 2)], t.rotation()[(0, 2)], epsilon = 1e-15);
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_relative_eq!(v["rotation"][0][2].as_f64().unwrap(), t.rotation()[(0, 2)]);
    }
}
