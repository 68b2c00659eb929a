//! Frame-tagged rigid transforms, the C-arm projection model, triangulation,
//! paired-point registration, Euler decomposition and clinical angles.

mod anatomy;
mod camera;
mod euler;
mod registration;
mod transform;
mod triangulate;

pub use anatomy::{lce_angle, relative_fragment_pose, AnatomicalFrame, LceLandmarks, Side};
pub use camera::{CArmCamera, CameraParams, DEFAULT_IMAGE_DIM, DEFAULT_PIXEL_SPACING_MM, DEFAULT_SDD_MM};
pub use euler::{euler_decompose, EulerLrIsAp};
pub use registration::{register_paired_3d3d, PairedRegistration};
pub(crate) use registration::horn;
pub use transform::{Frame, RigidTransform, ORTHONORMAL_TOL};
pub use triangulate::{triangulate, triangulate_rays};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("non-finite value")]
    NonFinite,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point lies on the source plane")]
    DegenerateRay,
    #[error("point lies behind the X-ray source")]
    BehindSource,
    #[error("ray directions do not span two dimensions")]
    RankDeficient,
    #[error("point sets have different lengths")]
    LengthMismatch,
    #[error("points are colinear")]
    Colinear,
    #[error("Euler decomposition is at gimbal lock")]
    GimbalLock,
    #[error("degenerate lateral edge vector")]
    DegenerateEdge,
}
