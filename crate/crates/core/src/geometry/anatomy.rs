use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Frame, GeometryError, RigidTransform};

/// Operative side. APP X points to the patient's left, so the lateral
/// direction of a left hip is +X and of a right hip is -X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign of the lateral direction along APP X.
    pub fn lateral_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Anatomical (APP) frame: X = LR, Y = IS (superior +), Z = AP (anterior +),
/// origin at the ipsilateral femoral head center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnatomicalFrame {
    app_to_volume: RigidTransform,
}

impl AnatomicalFrame {
    pub fn new(app_to_volume: RigidTransform) -> Result<Self, GeometryError> {
        if app_to_volume.from_frame() != Frame::App || app_to_volume.to_frame() != Frame::Volume {
            return Err(GeometryError::FrameMismatch {
                expected: Frame::App,
                found: app_to_volume.from_frame(),
            });
        }
        Ok(Self { app_to_volume })
    }

    pub fn app_to_volume(&self) -> &RigidTransform {
        &self.app_to_volume
    }

    pub fn volume_to_app(&self) -> RigidTransform {
        self.app_to_volume.inverse()
    }
}

/// Landmarks for the lateral center edge angle, in APP coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LceLandmarks {
    pub femoral_head_center: Point3<f64>,
    pub lateral_acetabular_edge: Point3<f64>,
}

impl LceLandmarks {
    pub fn new(femoral_head_center: Point3<f64>, lateral_acetabular_edge: Point3<f64>) -> Result<Self, GeometryError> {
        if (lateral_acetabular_edge.x - femoral_head_center.x).abs() < 1e-9 {
            return Err(GeometryError::DegenerateEdge);
        }
        Ok(Self {
            femoral_head_center,
            lateral_acetabular_edge,
        })
    }

    /// +1 when the preoperative edge is at larger X than the head center.
    fn lateral_sign(&self) -> f64 {
        (self.lateral_acetabular_edge.x - self.femoral_head_center.x).signum()
    }
}

/// Fragment motion in the APP frame from the two constellation poses
/// (both mapping volume coordinates into the C-arm frame):
/// `Δ = T_V→APP · T_IL⁻¹ · T_FR · T_APP→V`.
pub fn relative_fragment_pose(
    ilium_pose: &RigidTransform,
    fragment_pose: &RigidTransform,
    app: &AnatomicalFrame,
) -> Result<RigidTransform, GeometryError> {
    let frag_in_volume = ilium_pose.inverse().compose(fragment_pose)?;
    app.volume_to_app().compose(&frag_in_volume)?.compose(app.app_to_volume())
}

/// Lateral center edge angle (degrees) after applying `delta` to the edge
/// landmark.
///
/// The head-center→edge vector is projected onto the coronal (LR-IS) plane and
/// measured from the superior IS axis, positive toward lateral.
pub fn lce_angle(delta: &RigidTransform, landmarks: &LceLandmarks) -> Result<f64, GeometryError> {
    if delta.from_frame() != Frame::App || delta.to_frame() != Frame::App {
        return Err(GeometryError::FrameMismatch {
            expected: Frame::App,
            found: delta.from_frame(),
        });
    }
    let edge = delta.apply(&landmarks.lateral_acetabular_edge);
    let v: Vector3<f64> = edge - landmarks.femoral_head_center;
    let (lat, sup) = (v.x * landmarks.lateral_sign(), v.y);
    if lat.hypot(sup) < 1e-9 {
        return Err(GeometryError::DegenerateEdge);
    }
    Ok(lat.atan2(sup).to_degrees())
}
