//! Small bounded Levenberg–Marquardt solver with a central-difference
//! Jacobian, plus the 6-vector pose parametrization shared by the P3P polish
//! and the pose refinement stages.

use nalgebra::{DMatrix, DVector, Point3, Rotation3, Vector3};

use crate::geometry::RigidTransform;

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Stop once an accepted step is shorter than this.
    pub step_tol: f64,
    /// Central-difference step.
    pub fd_step: f64,
    /// Optional box bounds on the parameters.
    pub bounds: Option<(DVector<f64>, DVector<f64>)>,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step_tol: 1e-8,
            fd_step: 1e-6,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: DVector<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
}

fn cost_of(r: &DVector<f64>) -> f64 {
    if r.iter().all(|v| v.is_finite()) {
        r.norm_squared()
    } else {
        f64::INFINITY
    }
}

fn clamp(x: &mut DVector<f64>, bounds: &Option<(DVector<f64>, DVector<f64>)>) {
    if let Some((lo, hi)) = bounds {
        for i in 0..x.len() {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    }
}

/// Minimize `‖f(x)‖²`. Steps are accepted only when they lower the cost, so
/// the returned cost never exceeds the initial one.
pub fn levenberg_marquardt<F>(f: F, x0: DVector<f64>, opts: &LmOptions) -> LmResult
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0;
    clamp(&mut x, &opts.bounds);
    let mut r = f(&x);
    let mut cost = cost_of(&r);
    let initial_cost = cost;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    if !cost.is_finite() {
        return LmResult { x, cost, initial_cost, iterations };
    }
    while iterations < opts.max_iters && cost > 0.0 {
        iterations += 1;
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += opts.fd_step;
            xm[k] -= opts.fd_step;
            let col = (f(&xp) - f(&xm)) / (2.0 * opts.fd_step);
            jac.set_column(k, &col);
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut xn = &x + &step;
            clamp(&mut xn, &opts.bounds);
            let rn = f(&xn);
            let cn = cost_of(&rn);
            if cn < cost {
                let moved = (&xn - &x).norm();
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if moved < opts.step_tol {
                    return LmResult { x, cost, initial_cost, iterations };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    LmResult { x, cost, initial_cost, iterations }
}

/// Apply a 6-vector `(ω, τ)` to `base`: rotate the output-frame image of the
/// model by `exp(ω)` about `center`, then translate by `τ`.
pub fn perturb_pose(base: &RigidTransform, center: &Point3<f64>, x: &[f64]) -> RigidTransform {
    let rot = Rotation3::new(Vector3::new(x[0], x[1], x[2]));
    let r = rot.matrix() * base.rotation();
    let t = rot * (base.translation() - center.coords) + center.coords + Vector3::new(x[3], x[4], x[5]);
    RigidTransform::from_rotation(&Rotation3::from_matrix_unchecked(r), t, base.from_frame(), base.to_frame())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;

    #[test]
    fn rosenbrock_converges() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let res = levenberg_marquardt(f, DVector::from_vec(vec![-1.2, 1.0]), &LmOptions::default());
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
        assert!(res.cost <= res.initial_cost);
    }

    #[test]
    fn bounds_respected() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![x[0] - 5.0]);
        let opts = LmOptions {
            bounds: Some((DVector::from_vec(vec![-1.0]), DVector::from_vec(vec![2.0]))),
            ..Default::default()
        };
        let res = levenberg_marquardt(f, DVector::from_vec(vec![0.0]), &opts);
        assert!((res.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let base = RigidTransform::from_rotation(
            &Rotation3::from_euler_angles(0.1, 0.2, 0.3),
            Vector3::new(1.0, 2.0, 3.0),
            Frame::Volume,
            Frame::CArm,
        );
        let p = perturb_pose(&base, &Point3::new(5.0, 5.0, 5.0), &[0.0; 6]);
        assert!((p.rotation() - base.rotation()).norm() < 1e-15);
        assert!((p.translation() - base.translation()).norm() < 1e-12);
        // A pure rotation about the center leaves the center's preimage fixed.
        let c = Point3::new(5.0, 5.0, 5.0);
        let pre = base.inverse().apply(&c);
        let q = perturb_pose(&base, &c, &[0.1, -0.2, 0.05, 0.0, 0.0, 0.0]);
        assert!((q.apply(&pre) - c).norm() < 1e-12);
    }
}
