use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Rotation angles (degrees) about the anatomical axes, applied extrinsically
/// in the order LR (X), then IS (Y), then AP (Z): `R = Rz(ap) Ry(is) Rx(lr)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerLrIsAp {
    pub lr: f64,
    pub is: f64,
    pub ap: f64,
}

impl EulerLrIsAp {
    pub fn new(lr: f64, is: f64, ap: f64) -> Self {
        Self { lr, is, ap }
    }

    pub fn to_rotation(self) -> Matrix3<f64> {
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), self.lr.to_radians());
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), self.is.to_radians());
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.ap.to_radians());
        *(rz * ry * rx).matrix()
    }

    pub fn max_abs(&self) -> f64 {
        self.lr.abs().max(self.is.abs()).max(self.ap.abs())
    }
}

fn wrap_deg(a: f64) -> f64 {
    if a <= -180.0 {
        a + 360.0
    } else {
        a
    }
}

/// Decompose a rotation into LR/IS/AP extrinsic angles in (-180°, 180°].
pub fn euler_decompose(r: &Matrix3<f64>) -> Result<EulerLrIsAp, GeometryError> {
    let s = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let is = s.asin().to_degrees();
    if (90.0 - is.abs()).abs() < 1e-6 {
        return Err(GeometryError::GimbalLock);
    }
    let lr = r[(2, 1)].atan2(r[(2, 2)]).to_degrees();
    let ap = r[(1, 0)].atan2(r[(0, 0)]).to_degrees();
    Ok(EulerLrIsAp {
        lr: wrap_deg(lr),
        is: wrap_deg(is),
        ap: wrap_deg(ap),
    })
}
