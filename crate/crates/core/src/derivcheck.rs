//! Central finite differences and derivative checks for forward models and
//! the objective.
//!
//! Steps are `h = (1 + |u_i|) ε^{1/3}` for first derivatives and
//! `h = (1 + |u_i|) ε^{1/4}` for second derivatives from function values.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::problem::ForwardProblem;
use crate::Result;

/// Tolerance for first-derivative checks (`DG` against `G`, `∇I` against `I`).
pub const FIRST_ORDER_RTOL: f64 = 1e-5;
/// Tolerance for second-derivative checks (`HG` against `DG`, `HI` against `∇I`).
pub const SECOND_ORDER_RTOL: f64 = 1e-4;

pub fn fd_step_first(x: f64) -> f64 {
    (1.0 + x.abs()) * f64::EPSILON.cbrt()
}

pub fn fd_step_second(x: f64) -> f64 {
    (1.0 + x.abs()) * f64::EPSILON.powf(0.25)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error<R, C, S1, S2>(
    a: &nalgebra::Matrix<f64, R, C, S1>,
    b: &nalgebra::Matrix<f64, R, C, S2>,
) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S1: nalgebra::storage::Storage<f64, R, C>,
    S2: nalgebra::storage::Storage<f64, R, C>,
{
    assert_eq!(a.shape(), b.shape());
    let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, u: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(u.len());
    let mut x = u.clone();
    for i in 0..u.len() {
        let h = fd_step_first(u[i]);
        x[i] = u[i] + h;
        let fp = f(&x);
        x[i] = u[i] - h;
        let fm = f(&x);
        x[i] = u[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector map.
pub fn fd_jacobian<G: Fn(&DVector<f64>) -> DVector<f64>>(g: G, u: &DVector<f64>) -> DMatrix<f64> {
    let m = g(u).len();
    let mut jac = DMatrix::zeros(m, u.len());
    let mut x = u.clone();
    for j in 0..u.len() {
        let h = fd_step_first(u[j]);
        x[j] = u[j] + h;
        let gp = g(&x);
        x[j] = u[j] - h;
        let gm = g(&x);
        x[j] = u[j];
        jac.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    jac
}

/// `HG_k[i, j] ≈ ∂_j DG_{k i}` from central differences of the Jacobian,
/// symmetrised per output component.
pub fn fd_jacobian_derivative<J: Fn(&DVector<f64>) -> DMatrix<f64>>(
    jac: J,
    u: &DVector<f64>,
) -> Vec<DMatrix<f64>> {
    let n = u.len();
    let j0 = jac(u);
    let m = j0.nrows();
    let mut out = vec![DMatrix::zeros(n, n); m];
    let mut x = u.clone();
    for j in 0..n {
        let h = fd_step_first(u[j]);
        x[j] = u[j] + h;
        let jp = jac(&x);
        x[j] = u[j] - h;
        let jm = jac(&x);
        x[j] = u[j];
        let d = (jp - jm) / (2.0 * h);
        for (k, hk) in out.iter_mut().enumerate() {
            for i in 0..n {
                hk[(i, j)] = d[(k, i)];
            }
        }
    }
    out.into_iter().map(|h| (&h + h.transpose()) * 0.5).collect()
}

/// Second derivatives of a scalar function from function values only.
pub fn fd_hessian<F: Fn(&DVector<f64>) -> f64>(f: F, u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f(u);
    let mut x = u.clone();
    for i in 0..n {
        let hi = fd_step_second(u[i]);
        x[i] = u[i] + hi;
        let fp = f(&x);
        x[i] = u[i] - hi;
        let fm = f(&x);
        x[i] = u[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in (i + 1)..n {
            let hj = fd_step_second(u[j]);
            let mut eval = |si: f64, sj: f64| {
                x[i] = u[i] + si * hi;
                x[j] = u[j] + sj * hj;
                let v = f(&x);
                x[i] = u[i];
                x[j] = u[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Worst relative errors observed over a set of test points.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct DerivativeReport {
    pub points: usize,
    /// `DG` against central differences of `G`.
    pub jacobian: f64,
    /// Supplied `HG` against central differences of `DG`; `None` when the
    /// model relies on the finite-difference fallback.
    pub model_hessian: Option<f64>,
    /// `∇I` against central differences of `I`.
    pub grad_i: f64,
    /// `HI` against central differences of `∇I`.
    pub hess_i: f64,
}

impl DerivativeReport {
    pub fn passes(&self) -> bool {
        self.jacobian <= FIRST_ORDER_RTOL
            && self.model_hessian.is_none_or(|e| e <= SECOND_ORDER_RTOL)
            && self.grad_i <= FIRST_ORDER_RTOL
            && self.hess_i <= SECOND_ORDER_RTOL
    }
}

/// Checks every derivative of `problem` at the given points.
pub fn check_problem(problem: &ForwardProblem, points: &[DVector<f64>]) -> Result<DerivativeReport> {
    let model = problem.model();
    let mut report = DerivativeReport {
        points: points.len(),
        ..DerivativeReport::default()
    };
    for u in points {
        let jac = model.jacobian(u);
        let fd = fd_jacobian(|v| model.eval(v), u);
        report.jacobian = report.jacobian.max(relative_error(&jac, &fd));

        if let Some(hg) = model.hessian(u) {
            let fd = fd_jacobian_derivative(|v| model.jacobian(v), u);
            let worst = hg
                .iter()
                .zip(&fd)
                .map(|(a, b)| relative_error(a, b))
                .fold(0.0, f64::max);
            report.model_hessian = Some(report.model_hessian.unwrap_or(0.0).max(worst));
        }

        let grad = problem.grad_i(u)?;
        let fd = fd_gradient(|v| problem.objective_i(v).unwrap_or(f64::NAN), u);
        report.grad_i = report.grad_i.max(relative_error(&grad, &fd));

        let hess = problem.hess_i(u)?;
        let fd = fd_jacobian(|v| problem.grad_i(v).unwrap_or_else(|_| v * f64::NAN), u);
        let fd = (&fd + fd.transpose()) * 0.5;
        report.hess_i = report.hess_i.max(relative_error(hess.matrix(), &fd));
    }
    if !(report.jacobian.is_finite() && report.grad_i.is_finite() && report.hess_i.is_finite()) {
        return Err(crate::Error::NonFinite("derivative check".into()));
    }
    Ok(report)
}

/// `count` test points drawn from the prior with a seeded stream.
pub fn random_points(problem: &ForwardProblem, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = problem.prior().sample_with(&mut rng, count);
    s.column_iter().map(|c| c.into_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, BuiltinOptions};
    use approx::assert_relative_eq;

    #[test]
    fn gradient_of_quadratic() {
        let f = |u: &DVector<f64>| 3.0 * u[0] * u[0] - 2.0 * u[0] * u[1] + u[1];
        let u = DVector::from_vec(vec![0.7, -1.2]);
        let g = fd_gradient(f, &u);
        assert_relative_eq!(g[0], 6.0 * 0.7 + 2.4, max_relative = 1e-9);
        assert_relative_eq!(g[1], -1.4 + 1.0, max_relative = 1e-9);
        let h = fd_hessian(f, &u);
        assert_relative_eq!(h[(0, 0)], 6.0, max_relative = 1e-6);
        assert_relative_eq!(h[(0, 1)], -2.0, max_relative = 1e-6);
    }

    #[test]
    fn builtins_pass_checks() {
        for name in crate::problem::BUILTIN_MODELS {
            for y in [None, Some(-2.0)] {
                let opts = match (name, y) {
                    ("exp1d", Some(y)) => BuiltinOptions::with_y(y),
                    _ => BuiltinOptions::default(),
                };
                let p = builtin_problem(name, &opts).unwrap();
                let pts = random_points(&p, 20, 17);
                let r = check_problem(&p, &pts).unwrap();
                assert!(r.passes(), "{name}: {r:?}");
                assert!(r.model_hessian.is_some());
            }
        }
    }

    #[test]
    fn wrong_jacobian_is_caught() {
        #[derive(Debug)]
        struct Broken;
        impl crate::problem::ForwardModel for Broken {
            fn dim_in(&self) -> usize {
                1
            }
            fn dim_out(&self) -> usize {
                1
            }
            fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
                u.map(|x| x.sin())
            }
            fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, 1.01 * u[0].cos())
            }
        }
        let p = crate::ForwardProblem::new(
            std::sync::Arc::new(Broken),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DVector::from_element(1, 0.3),
        )
        .unwrap();
        let r = check_problem(&p, &random_points(&p, 5, 1)).unwrap();
        assert!(!r.passes());
        assert!(r.jacobian > 1e-3);
    }
}
