//! Paired-point rigid registration using Horn's unit-quaternion method.

use nalgebra::{Matrix3, Matrix4, Point3, SymmetricEigen, UnitQuaternion, Vector3, Quaternion};

use super::{Frame, GeometryError, RigidTransform};

/// Relative singular-value floor below which the source set is treated as colinear.
const COLINEAR_RELATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PairedRegistration {
    pub transform: RigidTransform,
    /// Root-mean-square residual `‖T src_i - dst_i‖` (mm).
    pub rms: f64,
}

/// Least-squares rigid transform taking `src` onto `dst`.
pub fn register_paired_3d3d(
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
    from: Frame,
    to: Frame,
) -> Result<PairedRegistration, GeometryError> {
    let (rotation, translation) = horn(src, dst)?;
    let transform = RigidTransform::new(rotation, translation, from, to)?;
    let rms = (src
        .iter()
        .zip(dst)
        .map(|(s, d)| (transform.apply(s) - d).norm_squared())
        .sum::<f64>()
        / src.len() as f64)
        .sqrt();
    Ok(PairedRegistration { transform, rms })
}

/// Raw rotation/translation solve, without frame bookkeeping.
pub(crate) fn horn(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<(Matrix3<f64>, Vector3<f64>), GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch);
    }
    if src.len() < 3 {
        return Err(GeometryError::Colinear);
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;

    let mut spread = Matrix3::zeros();
    let mut m = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s.coords - cs;
        let b = d.coords - cd;
        spread += a * a.transpose();
        m += a * b.transpose();
    }
    let ev = SymmetricEigen::new(spread).eigenvalues;
    let mut sv: Vec<f64> = ev.iter().map(|v| v.max(0.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= COLINEAR_RELATIVE_TOL * sv[0] {
        return Err(GeometryError::Colinear);
    }

    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy,       szx - sxz,       sxy - syx,
        syz - szy,       sxx - syy - szz, sxy + syx,       szx + sxz,
        szx - sxz,       sxy + syx,       -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,       syz + szy,       -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let best = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(best);
    let quat = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    let rotation = *quat.to_rotation_matrix().matrix();
    let translation = cd - rotation * cs;
    Ok((rotation, translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts() -> Vec<Point3<f64>> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(30.0, 2.0, -4.0),
            Point3::new(5.0, 25.0, 3.0),
            Point3::new(-8.0, 10.0, 18.0),
        ]
    }

    #[test]
    fn identity_on_equal_sets() {
        let p = pts();
        let r = register_paired_3d3d(&p, &p, Frame::Volume, Frame::Volume).unwrap();
        assert!((r.transform.rotation() - Matrix3::identity()).amax() < 1e-12);
        assert!(r.transform.translation().norm() < 1e-12);
        assert!(r.rms < 1e-12);
    }

    #[test]
    fn recovers_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let rot = Rotation3::from_euler_angles(
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            );
            let t = Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
            let truth = RigidTransform::from_rotation(&rot, t, Frame::Volume, Frame::CArm);
            let src = pts();
            let dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
            let est = register_paired_3d3d(&src, &dst, Frame::Volume, Frame::CArm).unwrap();
            assert!((est.transform.rotation() - truth.rotation()).amax() < 1e-9);
            assert!((est.transform.translation() - truth.translation()).amax() < 1e-9);
        }
    }

    #[test]
    fn colinear_points_rejected() {
        let src = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 2.0, 2.0)];
        let err = register_paired_3d3d(&src, &src, Frame::Volume, Frame::Volume).unwrap_err();
        assert_eq!(err, GeometryError::Colinear);
    }
}
