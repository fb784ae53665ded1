//! MAP estimation, the second-order Taylor surrogate `TΦ` of the misfit,
//! and the Laplace measure `ν = N(u_MAP, HI(u_MAP)⁻¹)`.
//!
//! `ν` has density `exp(−TΦ)/Z` with respect to the prior. The routines
//! [`normalization_constant`] and [`charfn_check`] compare the closed forms
//!
//! ```text
//! ∫ exp(−TΦ) dμ₀           = e^{−I(u_MAP)} / √det(C₀^½ HI C₀^½)
//! ∫ e^{i⟨λ,u⟩} e^{−TΦ} dμ₀  = e^{−I(u_MAP)} e^{i⟨u_MAP,λ⟩ − ½ HI⁻¹[λ,λ]} / √det(C₀^½ HI C₀^½)
//! ```
//!
//! against numerical integration.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gaussian::{det_factor, gauss_integral_complex, Complex64, GaussianMeasure, SymmetricOperator};
use crate::linalg::spd_inverse;
use crate::problem::ForwardProblem;
use crate::quadrature::IntegrationEngine;
use crate::{Error, Result};

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_HALVINGS: usize = 40;
/// Multistart runs whose optimal `I` differ by more than this flag possible
/// multimodality.
pub const MULTISTART_AGREEMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapOptions {
    pub max_iterations: usize,
    /// Convergence when `‖∇I‖ ≤ grad_tol · (1 + |I|)`.
    pub grad_tol: f64,
    /// Extra Newton runs from prior samples.
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            grad_tol: 1e-10,
            multistarts: 5,
            seed: 0,
        }
    }
}

/// Outcome of the multistart sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultistartSummary {
    pub starts: usize,
    pub converged: usize,
    /// `max I − min I` over all converged runs, including the primary one.
    pub spread: f64,
    /// `spread > 1e-6`: distinct local minima were found.
    pub disagreement: bool,
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub u_map: DVector<f64>,
    /// Unmodified `HI(u_MAP)`; positive definite.
    pub hess_i_at_map: SymmetricOperator,
    pub hess_phi_at_map: SymmetricOperator,
    pub i_at_map: f64,
    /// Newton steps taken by the run that produced `u_map`.
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub multistart: Option<MultistartSummary>,
}

/// Newton's method with backtracking from `init`, no multistart.
pub fn newton(problem: &ForwardProblem, init: &DVector<f64>, opts: &MapOptions) -> Result<MapResult> {
    if init.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial point",
            expected: problem.dim(),
            got: init.len(),
        });
    }
    let mut u = init.clone();
    let mut f = problem.objective_i(&u)?;
    if !f.is_finite() {
        return Err(Error::NonFinite("objective at the initial point".into()));
    }
    let mut grad_norm = f64::INFINITY;
    for it in 0..=opts.max_iterations {
        let g = problem.grad_i(&u)?;
        grad_norm = g.norm();
        if grad_norm <= opts.grad_tol * (1.0 + f.abs()) {
            return finish(problem, u, f, it, grad_norm);
        }
        if it == opts.max_iterations {
            break;
        }
        let h = problem.hess_i(&u)?;
        let step = regularized_newton_step(h.matrix(), &g);
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &u + &step * t;
            if let Ok(fc) = problem.objective_i(&cand) {
                // The 4ε|f| slack absorbs rounding once the decrease is at
                // the level of machine precision.
                if fc.is_finite() && fc <= f + ARMIJO_C * t * slope + 4.0 * f64::EPSILON * f.abs() {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= BACKTRACK;
        }
        match accepted {
            Some((cand, fc)) => {
                u = cand;
                f = fc;
            }
            None => {
                return Err(Error::LineSearchStalled {
                    iterations: it,
                    grad_norm,
                })
            }
        }
    }
    Err(Error::MaxIterations {
        iterations: opts.max_iterations,
        grad_norm,
    })
}

/// Solves `(H + λI) p = −g`, raising `λ` from zero until the shifted matrix
/// admits a Cholesky factorization.
fn regularized_newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let n = h.nrows();
    let scale = h.norm().max(1.0);
    let mut lambda = 0.0;
    loop {
        let shifted = h + DMatrix::identity(n, n) * lambda;
        if let Some(chol) = shifted.cholesky() {
            let p = chol.solve(&(-g));
            if p.iter().all(|x| x.is_finite()) {
                return p;
            }
        }
        lambda = if lambda == 0.0 { 1e-8 * scale } else { lambda * 10.0 };
        if lambda > 1e20 * scale {
            return -g.clone();
        }
    }
}

fn finish(
    problem: &ForwardProblem,
    u: DVector<f64>,
    f: f64,
    iterations: usize,
    grad_norm: f64,
) -> Result<MapResult> {
    let hess_i = problem.hess_i(&u)?;
    if !hess_i.is_positive_definite() {
        return Err(Error::IndefiniteHessianAtOptimum {
            min_eigenvalue: hess_i.min_eigenvalue(),
        });
    }
    let hess_phi = problem.hess_phi(&u)?;
    Ok(MapResult {
        u_map: u,
        hess_i_at_map: hess_i,
        hess_phi_at_map: hess_phi,
        i_at_map: f,
        iterations,
        grad_norm,
        converged: true,
        multistart: None,
    })
}

/// MAP point: Newton from `init`, plus `opts.multistarts` seeded runs from
/// prior draws; the lowest `I` wins and disagreement between runs is
/// reported rather than hidden.
pub fn find_map(problem: &ForwardProblem, init: &DVector<f64>, opts: &MapOptions) -> Result<MapResult> {
    let primary = newton(problem, init, opts);
    if opts.multistarts == 0 {
        return primary;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts = problem.prior().sample_with(&mut rng, opts.multistarts);
    let others: Vec<MapResult> = starts
        .column_iter()
        .filter_map(|s| newton(problem, &s.into_owned(), opts).ok())
        .collect();

    let mut values: Vec<f64> = others.iter().map(|r| r.i_at_map).collect();
    if let Ok(r) = &primary {
        values.push(r.i_at_map);
    }
    let summary = |values: &[f64]| {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = if values.is_empty() { 0.0 } else { hi - lo };
        MultistartSummary {
            starts: opts.multistarts,
            converged: others.len(),
            spread,
            disagreement: spread > MULTISTART_AGREEMENT,
        }
    };
    let summary = summary(&values);

    let best_other = others
        .iter()
        .min_by(|a, b| a.i_at_map.total_cmp(&b.i_at_map))
        .cloned();
    let mut best = match (primary, best_other) {
        (Ok(p), Some(o)) if o.i_at_map < p.i_at_map - MULTISTART_AGREEMENT => o,
        (Ok(p), _) => p,
        (Err(_), Some(o)) => o,
        (Err(e), None) => return Err(e),
    };
    best.multistart = Some(summary);
    Ok(best)
}

/// `TΦ(u) = Φ(a) + ⟨∇Φ(a), u − a⟩ + ½ HΦ(a)[u − a, u − a]` anchored at `a`.
#[derive(Debug, Clone)]
pub struct TaylorMisfit {
    pub anchor: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: SymmetricOperator,
}

impl TaylorMisfit {
    pub fn at(problem: &ForwardProblem, anchor: &DVector<f64>) -> Result<Self> {
        Ok(Self {
            anchor: anchor.clone(),
            value: problem.misfit_phi(anchor)?,
            grad: problem.grad_phi(anchor)?,
            hess: problem.hess_phi(anchor)?,
        })
    }

    /// The surrogate at the MAP point of `map`.
    pub fn from_map(problem: &ForwardProblem, map: &MapResult) -> Result<Self> {
        Ok(Self {
            anchor: map.u_map.clone(),
            value: problem.misfit_phi(&map.u_map)?,
            grad: problem.grad_phi(&map.u_map)?,
            hess: map.hess_phi_at_map.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        if u == &self.anchor {
            return self.value;
        }
        let d = u - &self.anchor;
        self.value + self.grad.dot(&d) + 0.5 * self.hess.quadratic_form(&d)
    }

    /// `R(u) = Φ(u) − TΦ(u)`.
    pub fn remainder(&self, problem: &ForwardProblem, u: &DVector<f64>) -> Result<f64> {
        Ok(problem.misfit_phi(u)? - self.eval(u))
    }

    /// `N(anchor, (HΦ + C₀⁻¹)⁻¹)`; equals the Laplace measure when anchored
    /// at the MAP point.
    pub fn gaussian(&self, prior: &GaussianMeasure) -> Result<GaussianMeasure> {
        let hi = self.hess.matrix() + prior.precision();
        GaussianMeasure::new(self.anchor.clone(), spd_inverse(&hi)?)
    }

    /// Fails with [`Error::DivergentIntegral`] unless `Id + C₀^½ HΦ C₀^½` is
    /// positive definite, i.e. `exp(−TΦ)` is prior-integrable.
    pub fn check_integrable(&self, prior: &GaussianMeasure) -> Result<()> {
        let c_sqrt = prior.covariance_sqrt();
        let conj = &c_sqrt * self.hess.matrix() * &c_sqrt;
        let shifted = crate::linalg::symmetrize(&conj) + DMatrix::identity(self.dim(), self.dim());
        let min = crate::linalg::min_eigenvalue(&shifted);
        if min > 0.0 {
            Ok(())
        } else {
            Err(Error::DivergentIntegral { min_eigenvalue: min })
        }
    }
}

/// `ν = N(u_MAP, HI(u_MAP)⁻¹)`.
pub fn laplace_measure(map: &MapResult) -> Result<GaussianMeasure> {
    let cov = spd_inverse(map.hess_i_at_map.matrix())?;
    GaussianMeasure::new(map.u_map.clone(), cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationCheck {
    pub analytic: f64,
    pub numeric: f64,
}

impl NormalizationCheck {
    pub fn relative_error(&self) -> f64 {
        (self.numeric - self.analytic).abs() / self.analytic.abs()
    }
}

fn analytic_normalization(problem: &ForwardProblem, map: &MapResult) -> Result<f64> {
    let det = det_factor(problem.prior().covariance(), &map.hess_i_at_map)?;
    Ok((-map.i_at_map).exp() / det.sqrt())
}

/// `∫ exp(−TΦ) dμ₀` in closed form and by `engine`.
pub fn normalization_constant(
    problem: &ForwardProblem,
    taylor: &TaylorMisfit,
    map: &MapResult,
    engine: &IntegrationEngine,
) -> Result<NormalizationCheck> {
    taylor.check_integrable(problem.prior())?;
    let analytic = analytic_normalization(problem, map)?;
    let nu = laplace_measure(map)?;
    let est = engine.expect(problem.prior(), Some(&nu), true, |u| [(-taylor.eval(u)).exp()])?;
    Ok(NormalizationCheck {
        analytic,
        numeric: est.value[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharFnCheck {
    /// `∫ exp(i⟨λ,u⟩ − TΦ(u)) dμ₀(u)` by numerical integration.
    pub lhs: Complex64,
    /// The closed form.
    pub rhs: Complex64,
    /// `lhs / ∫ exp(−TΦ) dμ₀`, the numerically integrated characteristic
    /// function of `exp(−TΦ) dμ₀ / Z`.
    pub measure_charfn: Complex64,
    /// Characteristic function of `N(u_MAP, HI(u_MAP)⁻¹)` at `λ`.
    pub gaussian_charfn: Complex64,
}

impl CharFnCheck {
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs).norm() / self.rhs.norm()
    }

    pub fn measure_relative_error(&self) -> f64 {
        (self.measure_charfn - self.gaussian_charfn).norm() / self.gaussian_charfn.norm()
    }
}

fn gaussian_charfn(map: &MapResult, cov: &DMatrix<f64>, lambda: &DVector<f64>) -> Complex64 {
    let phase = map.u_map.dot(lambda);
    let modulus = (-0.5 * lambda.dot(&(cov * lambda))).exp();
    Complex64::from_polar(modulus, phase)
}

/// Compares both sides of the characteristic-function identity at `λ`.
pub fn charfn_check(
    problem: &ForwardProblem,
    taylor: &TaylorMisfit,
    map: &MapResult,
    lambda: &DVector<f64>,
    engine: &IntegrationEngine,
) -> Result<CharFnCheck> {
    if lambda.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            what: "frequency",
            expected: problem.dim(),
            got: lambda.len(),
        });
    }
    taylor.check_integrable(problem.prior())?;
    let nu = laplace_measure(map)?;
    let est = engine.expect(problem.prior(), Some(&nu), true, |u| {
        let w = (-taylor.eval(u)).exp();
        let ph = lambda.dot(u);
        [w * ph.cos(), w * ph.sin(), w]
    })?;
    let lhs = Complex64::new(est.value[0], est.value[1]);
    let gauss = gaussian_charfn(map, nu.covariance(), lambda);
    let rhs = gauss * analytic_normalization(problem, map)?;
    Ok(CharFnCheck {
        lhs,
        rhs,
        measure_charfn: lhs / est.value[2],
        gaussian_charfn: gauss,
    })
}

/// The closed-form right-hand side obtained through the complex Gaussian
/// integral: with `J = HI(u_MAP)` and `v = u_MAP`,
/// `e^{−I(v) − ½⟨Jv,v⟩} ∫ exp(½⟨(C₀⁻¹ − J)u,u⟩ + ⟨Jv + iλ, u⟩) dμ₀`.
pub fn charfn_via_gaussian_integral(
    problem: &ForwardProblem,
    map: &MapResult,
    lambda: &DVector<f64>,
) -> Result<Complex64> {
    let j = map.hess_i_at_map.matrix();
    let v = &map.u_map;
    let m = SymmetricOperator::symmetrized(&(problem.prior().precision() - j))?;
    let jv = j * v;
    let integral = gauss_integral_complex(problem.prior(), &m, &jv, lambda)?;
    Ok(integral * (-map.i_at_map - 0.5 * jv.dot(v)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, BuiltinOptions, LinearModel};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    /// Bisection on `h(u) = eᵘ(eᵘ − y) + u`, increasing in `u` for `y ≤ 2`
    /// near the root.
    fn bisect_exp_map(y: f64) -> f64 {
        let h = |u: f64| u.exp() * (u.exp() - y) + u;
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        assert!(h(lo) < 0.0 && h(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        0.5 * (lo + hi)
    }

    fn exp_problem(y: f64) -> ForwardProblem {
        builtin_problem("exp1d", &BuiltinOptions::with_y(y)).unwrap()
    }

    #[test]
    fn exp_map_matches_bisection() {
        for y in [2.0, -2.0] {
            let p = exp_problem(y);
            let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
            assert!(r.converged);
            let oracle = bisect_exp_map(y);
            assert!((r.u_map[0] - oracle).abs() < 1e-10, "y={y}: {} vs {oracle}", r.u_map[0]);
            assert!(!r.multistart.as_ref().unwrap().disagreement);
            assert!(p.grad_i(&r.u_map).unwrap().norm() <= 1e-9);
        }
        assert!(bisect_exp_map(-2.0) < 0.0);
    }

    #[test]
    fn linear_gaussian_map_in_one_step() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.4, 1.5, 0.3, 0.3]);
        let gamma = DMatrix::identity(3, 3) * 0.3;
        let c0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
        let y = DVector::from_vec(vec![0.5, -0.3, 0.9]);
        let p = ForwardProblem::new(
            Arc::new(LinearModel::new(a.clone()).unwrap()),
            gamma.clone(),
            c0.clone(),
            y.clone(),
        )
        .unwrap();
        let r = find_map(&p, &DVector::zeros(2), &MapOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        let gi = gamma.try_inverse().unwrap();
        let post_prec = a.transpose() * &gi * &a + c0.try_inverse().unwrap();
        let post_cov = post_prec.clone().try_inverse().unwrap();
        let expected = &post_cov * a.transpose() * &gi * &y;
        assert!((&r.u_map - expected).norm() < 1e-12);
        let nu = laplace_measure(&r).unwrap();
        assert!((nu.covariance() - post_cov).norm() < 1e-12);
    }

    #[test]
    fn taylor_surrogate_properties() {
        let p = exp_problem(-2.0);
        let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
        let t = TaylorMisfit::from_map(&p, &r).unwrap();
        assert_eq!(t.eval(&r.u_map), t.value);
        // I'(u_MAP) = 0 while Φ'(u_MAP) = −u_MAP/σ² ≠ 0.
        assert!(t.grad.norm() > 0.1);
        assert_relative_eq!(t.grad[0], -r.u_map[0], max_relative = 1e-9);

        // One-dimensional identity: TΦ(u) = I(u_MAP) + ½I''(u_MAP)(u − u_MAP)² − u²/(2σ²).
        let ipp = r.hess_i_at_map.matrix()[(0, 0)];
        for &u in &[-3.0, -1.0, 0.0, 0.7, 2.5] {
            let d = u - r.u_map[0];
            let via_identity = r.i_at_map + 0.5 * ipp * d * d - 0.5 * u * u;
            let direct = t.eval(&v1(u));
            assert!((direct - via_identity).abs() <= 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn laplace_variance_is_inverse_curvature() {
        let p = exp_problem(2.0);
        let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
        let nu = laplace_measure(&r).unwrap();
        let oracle = bisect_exp_map(2.0);
        let fd = crate::derivcheck::fd_hessian(|u| p.objective_i(u).unwrap(), &v1(oracle))[(0, 0)];
        assert_relative_eq!(nu.covariance()[(0, 0)], 1.0 / fd, max_relative = 1e-6);
        assert_relative_eq!(
            nu.covariance()[(0, 0)],
            1.0 / r.hess_i_at_map.matrix()[(0, 0)],
            max_relative = 1e-14
        );
    }

    #[test]
    fn linear_normalization_closed_form() {
        let p = ForwardProblem::new(
            Arc::new(LinearModel::new(DMatrix::identity(1, 1)).unwrap()),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            v1(0.0),
        )
        .unwrap();
        let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
        let t = TaylorMisfit::from_map(&p, &r).unwrap();
        let n = normalization_constant(&p, &t, &r, &IntegrationEngine::gauss_hermite(96)).unwrap();
        assert_relative_eq!(n.analytic, 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(n.numeric, 0.5f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn exp_normalization_with_64_nodes() {
        for y in [2.0, -2.0] {
            let p = exp_problem(y);
            let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
            let t = TaylorMisfit::from_map(&p, &r).unwrap();
            let n = normalization_constant(&p, &t, &r, &IntegrationEngine::gauss_hermite(64)).unwrap();
            assert!(n.relative_error() < 1e-8, "y={y}: {n:?}");
        }
    }

    #[test]
    fn charfn_at_zero_frequency_is_normalization() {
        let p = exp_problem(-2.0);
        let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
        let t = TaylorMisfit::from_map(&p, &r).unwrap();
        let e = IntegrationEngine::gauss_hermite(96);
        let c = charfn_check(&p, &t, &r, &v1(0.0), &e).unwrap();
        let n = normalization_constant(&p, &t, &r, &e).unwrap();
        assert_eq!(c.rhs.re, n.analytic);
        assert_eq!(c.rhs.im, 0.0);
        assert_relative_eq!(c.lhs.re, n.numeric, max_relative = 1e-14);
    }

    #[test]
    fn charfn_exp_minus_two() {
        let p = exp_problem(-2.0);
        let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
        let t = TaylorMisfit::from_map(&p, &r).unwrap();
        let e = IntegrationEngine::gauss_hermite(96);
        for lambda in [0.5, 1.0, 2.0] {
            let c = charfn_check(&p, &t, &r, &v1(lambda), &e).unwrap();
            assert!(c.relative_error() <= 1e-6, "λ={lambda}: {c:?}");
            assert!(c.measure_relative_error() <= 1e-6);
            let alt = charfn_via_gaussian_integral(&p, &r, &v1(lambda)).unwrap();
            assert!((alt - c.rhs).norm() <= 1e-12 * c.rhs.norm());
        }
    }

    #[test]
    fn saddle_points_are_rejected() {
        // I(u) = ½(y − u³ + 3u)² / γ² + u²/2 has its stationary point u = 0
        // as a local maximum when y = 0 and γ is small.
        let expr = crate::problem::ExpressionModel::new(1, &["u0*u0*u0 - 3*u0".to_string()]).unwrap();
        let p = ForwardProblem::new(
            Arc::new(expr),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(1, 1),
            v1(0.0),
        )
        .unwrap();
        // Stationary at 0: ∇I = −G'(0)(y − G(0)) + 0 = 0. HI(0) = G'(0)² + 1 = 10 > 0,
        // so instead check the explicit test on a model with a true saddle.
        assert!(newton(&p, &v1(0.0), &MapOptions::default()).is_ok());

        #[derive(Debug)]
        struct Hump;
        impl crate::ForwardModel for Hump {
            fn dim_in(&self) -> usize {
                1
            }
            fn dim_out(&self) -> usize {
                1
            }
            fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
                // Φ = ½(1 − cos 3u)²·… has a maximum-type stationary point at 0
                // when combined with y below.
                u.map(|x| (2.0 * x).cos())
            }
            fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, -2.0 * (2.0 * u[0]).sin())
            }
            fn hessian(&self, u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
                Some(vec![DMatrix::from_element(1, 1, -4.0 * (2.0 * u[0]).cos())])
            }
        }
        // y = −1: at u = 0, residual r = −2, HI = 0 − (−4)(−2) + 1 = −7 < 0.
        let p = ForwardProblem::new(
            Arc::new(Hump),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            v1(-1.0),
        )
        .unwrap();
        match newton(&p, &v1(0.0), &MapOptions::default()) {
            Err(Error::IndefiniteHessianAtOptimum { min_eigenvalue }) => {
                assert_relative_eq!(min_eigenvalue, -7.0, max_relative = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        // Multistarts escape the saddle to a genuine minimum.
        let r = find_map(&p, &v1(0.0), &MapOptions::default()).unwrap();
        assert!(r.hess_i_at_map.is_positive_definite());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let p = exp_problem(2.0);
        let opts = MapOptions {
            max_iterations: 1,
            multistarts: 0,
            ..MapOptions::default()
        };
        assert!(matches!(
            find_map(&p, &v1(3.0), &opts),
            Err(Error::MaxIterations { iterations: 1, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn linear_surrogate_is_exact(a in -2.0..2.0f64, b in -2.0..2.0f64) {
                let p = builtin_problem("linear", &BuiltinOptions::default()).unwrap();
                let r = find_map(&p, &DVector::zeros(2), &MapOptions::default()).unwrap();
                let t = TaylorMisfit::from_map(&p, &r).unwrap();
                let u = DVector::from_vec(vec![a, b]);
                let phi = p.misfit_phi(&u).unwrap();
                prop_assert!((t.eval(&u) - phi).abs() <= 1e-9 * phi.abs().max(1e-3));
            }
        }
    }
}
