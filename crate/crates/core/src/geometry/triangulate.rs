use nalgebra::{Matrix3, Point2, Point3, Vector3};

use super::{CArmCamera, GeometryError};

/// Least-squares intersection of back-projected rays.
///
/// Minimizes the summed squared perpendicular distance to every ray, i.e.
/// solves `Σ (I - d dᵀ) x = Σ (I - d dᵀ) o` over the unit ray directions `d`
/// and ray origins `o` (the X-ray sources, world frame).
pub fn triangulate(observations: &[(&CArmCamera, Point2<f64>)]) -> Result<Point3<f64>, GeometryError> {
    if observations.len() < 2 {
        return Err(GeometryError::RankDeficient);
    }
    let rays: Vec<(Point3<f64>, Vector3<f64>)> = observations.iter().map(|(cam, px)| cam.world_ray(px)).collect();
    triangulate_rays(&rays)
}

pub fn triangulate_rays(rays: &[(Point3<f64>, Vector3<f64>)]) -> Result<Point3<f64>, GeometryError> {
    if rays.len() < 2 {
        return Err(GeometryError::RankDeficient);
    }
    // Directions must span at least two dimensions.
    let spans = rays
        .iter()
        .enumerate()
        .any(|(i, (_, a))| rays[i + 1..].iter().any(|(_, b)| a.cross(b).norm() > 1e-9));
    if !spans {
        return Err(GeometryError::RankDeficient);
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (o, d) in rays {
        let p = Matrix3::identity() - d * d.transpose();
        a += p;
        b += p * o.coords;
    }
    a.lu().solve(&b).map(Point3::from).ok_or(GeometryError::RankDeficient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, RigidTransform};
    use nalgebra::Rotation3;

    fn view(angle_deg: f64) -> CArmCamera {
        let rot = Rotation3::from_euler_angles(0.0, angle_deg.to_radians(), 0.0);
        let ext = RigidTransform::from_rotation(&rot, Vector3::new(0.0, 0.0, 800.0), Frame::Volume, Frame::CArm);
        CArmCamera::default_with_extrinsics(ext)
    }

    #[test]
    fn exact_two_view_recovery() {
        let (c1, c2) = (view(0.0), view(30.0));
        let x = Point3::new(12.0, -7.5, 20.0);
        let obs = [(&c1, c1.project(&x).unwrap()), (&c2, c2.project(&x).unwrap())];
        let y = triangulate(&obs).unwrap();
        assert!((y - x).norm() < 1e-9, "{}", (y - x).norm());
    }

    #[test]
    fn identical_views_are_rank_deficient() {
        let c = view(0.0);
        let px = Point2::new(700.0, 800.0);
        assert_eq!(triangulate(&[(&c, px), (&c, px)]).unwrap_err(), GeometryError::RankDeficient);
        assert_eq!(triangulate(&[(&c, px)]).unwrap_err(), GeometryError::RankDeficient);
    }
}
