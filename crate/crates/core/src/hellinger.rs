//! Hellinger distance between the posterior `μ` and its Laplace
//! approximation `ν`, the reverse Cauchy–Schwarz inequalities, and the two
//! computable certificates bounding `d_H(μ, ν)`.
//!
//! Every integral is taken against the prior. Integrands are multiplied by
//! `exp(Φ(u_MAP))` before integration and the factor is divided out again,
//! so large misfits at the MAP point do not underflow.

use nalgebra::DVector;
use serde::Serialize;

use crate::gaussian::{det_factor, det_factor_shifted};
use crate::laplace::{MapResult, TaylorMisfit};
use crate::problem::ForwardProblem;
use crate::quadrature::{Estimate, IntegrationEngine};
use crate::{Error, Result};

/// Negative values of `d_H²` down to this size are rounding noise.
pub const RADICAND_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HellingerEstimate {
    pub distance: f64,
    /// Estimator standard error of `distance`; zero for deterministic rules.
    pub std_error: f64,
    pub evaluations: usize,
}

/// Evaluates `[Φ − c, TΦ − c]` with `c = Φ(u_MAP)`; failures become NaN so
/// the engine reports a non-finite estimate.
fn shifted_pair(problem: &ForwardProblem, taylor: &TaylorMisfit, u: &DVector<f64>) -> (f64, f64) {
    let phi = problem.misfit_phi(u).unwrap_or(f64::NAN);
    (phi - taylor.value, taylor.eval(u) - taylor.value)
}

/// `d_H(μ, ν) = √(1 − ⟨e^{−Φ/2}, e^{−TΦ/2}⟩ / (‖e^{−Φ/2}‖ ‖e^{−TΦ/2}‖))` in
/// `L²(μ₀)`.
pub fn hellinger(
    problem: &ForwardProblem,
    taylor: &TaylorMisfit,
    engine: &IntegrationEngine,
) -> Result<HellingerEstimate> {
    taylor.check_integrable(problem.prior())?;
    let nu = taylor.gaussian(problem.prior())?;
    let est: Estimate<3> = engine.expect(problem.prior(), Some(&nu), true, |u| {
        let (a, b) = shifted_pair(problem, taylor, u);
        [(-0.5 * (a + b)).exp(), (-a).exp(), (-b).exp()]
    })?;
    let [inner, nphi, ntphi] = est.value;
    if !(nphi > 0.0 && ntphi > 0.0) {
        return Err(Error::NonFinite("vanishing density normalization".into()));
    }
    let root = (nphi * ntphi).sqrt();
    let radicand = 1.0 - inner / root;
    if radicand < -RADICAND_CLAMP {
        return Err(Error::Engine(format!(
            "Hellinger radicand {radicand:e} is negative beyond rounding"
        )));
    }
    let distance = radicand.max(0.0).sqrt();
    if !(0.0..=1.0).contains(&distance) {
        return Err(Error::NonFinite(format!("Hellinger distance {distance}")));
    }

    // Delta method on d² = 1 − A/√(BC).
    let grad = [
        -1.0 / root,
        0.5 * inner / (root * nphi),
        0.5 * inner / (root * ntphi),
    ];
    let mut var_sq = 0.0;
    for (i, gi) in grad.iter().enumerate() {
        for (j, gj) in grad.iter().enumerate() {
            var_sq += gi * est.covariance[i][j] * gj;
        }
    }
    let std_error = if est.is_stochastic() {
        let se_sq = var_sq.max(0.0).sqrt();
        if distance > 0.0 {
            se_sq / (2.0 * distance)
        } else {
            se_sq.sqrt()
        }
    } else {
        0.0
    };
    Ok(HellingerEstimate {
        distance,
        std_error,
        evaluations: est.evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// `‖e^{−Φ/2} − e^{−TΦ/2}‖ ≤ K e^{−I(u_MAP)/2} / det(C₀^½ HI C₀^½)^{1/4}`.
    Prop61,
    /// `K² = √det(C₀^½ HI C₀^½) e^{I(u_MAP)} ∫ e^{−min(Φ,TΦ)} min(|Φ−TΦ|²/4, 1) dμ₀`.
    Cor63,
}

/// A measured constant `K` and the Hellinger bound it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCertificate {
    pub method: BoundMethod,
    pub k_value: f64,
    /// `K / √(1 + (1 − K)²)`.
    pub hellinger_bound: f64,
    /// Numerically integrated side of the defining inequality.
    pub lhs: f64,
    /// `e^{−I(u_MAP)/2} / det(C₀^½ HI C₀^½)^{1/4}`: the right-hand side for `K = 1`.
    pub rhs: f64,
    /// `0 ≤ K < 1`.
    pub valid: bool,
    /// `det(C₀^½ HI(u_MAP) C₀^½)`.
    pub det_hi: f64,
    /// `det(Id + C₀^½ HΦ(u_MAP) C₀^½)`; equal to `det_hi` up to rounding.
    pub det_shifted: f64,
    /// Standard error of `k_value`; zero for deterministic rules.
    pub k_std_error: f64,
}

impl BoundCertificate {
    /// `|det_hi − det_shifted| / det_hi`.
    pub fn det_disagreement(&self) -> f64 {
        (self.det_hi - self.det_shifted).abs() / self.det_hi.abs()
    }
}

/// `K ↦ K / √(1 + (1 − K)²)`, increasing on `[0, 2]`.
pub fn bound_from_k(k: f64) -> f64 {
    k / (1.0 + (1.0 - k) * (1.0 - k)).sqrt()
}

fn certificate(
    problem: &ForwardProblem,
    taylor: &TaylorMisfit,
    map: &MapResult,
    engine: &IntegrationEngine,
    method: BoundMethod,
) -> Result<BoundCertificate> {
    taylor.check_integrable(problem.prior())?;
    let c0 = problem.prior().covariance();
    let det_shifted = det_factor_shifted(c0, &taylor.hess)?;
    let det_hi = det_factor(c0, &map.hess_i_at_map)?;
    let nu = crate::laplace::laplace_measure(map)?;

    let est: Estimate<1> = engine.expect(problem.prior(), Some(&nu), true, |u| {
        let (a, b) = shifted_pair(problem, taylor, u);
        let v = match method {
            BoundMethod::Prop61 => {
                let d = (-0.5 * a).exp() - (-0.5 * b).exp();
                d * d
            }
            BoundMethod::Cor63 => {
                let r = a - b;
                (-a.min(b)).exp() * (0.25 * r * r).min(1.0)
            }
        };
        [v]
    })?;
    let integral = est.value[0].max(0.0);
    // exp(−(I − c)/2) with c = Φ(u_MAP), so the shift cancels in K.
    let shifted_rhs = (-0.5 * (map.i_at_map - taylor.value)).exp() / det_hi.powf(0.25);
    let shifted_lhs = integral.sqrt();
    let k_value = shifted_lhs / shifted_rhs;
    let k_std_error = if est.is_stochastic() && integral > 0.0 {
        0.5 * k_value * est.std_error(0) / integral
    } else {
        0.0
    };
    let unshift = (-0.5 * taylor.value).exp();
    Ok(BoundCertificate {
        method,
        k_value,
        hellinger_bound: bound_from_k(k_value),
        lhs: shifted_lhs * unshift,
        rhs: shifted_rhs * unshift,
        valid: (0.0..1.0).contains(&k_value),
        det_hi,
        det_shifted,
        k_std_error,
    })
}

/// Measures `K` in `‖e^{−Φ/2} − e^{−TΦ/2}‖_{L²(μ₀)} ≤ K e^{−I(u_MAP)/2} / det(C₀^½ HI C₀^½)^{1/4}`.
pub fn bound_prop61(
    problem: &ForwardProblem,
    taylor: &TaylorMisfit,
    map: &MapResult,
    engine: &IntegrationEngine,
) -> Result<BoundCertificate> {
    certificate(problem, taylor, map, engine, BoundMethod::Prop61)
}

/// Measures `K` through the pointwise estimate
/// `|e^{−a/2} − e^{−b/2}|² ≤ e^{−min(a,b)} min(|a−b|²/4, 1)`.
pub fn bound_cor63(
    problem: &ForwardProblem,
    taylor: &TaylorMisfit,
    map: &MapResult,
    engine: &IntegrationEngine,
) -> Result<BoundCertificate> {
    certificate(problem, taylor, map, engine, BoundMethod::Cor63)
}

/// Relative slack in the hypothesis checks so that boundary cases such as
/// `g = (1 − K) f` are not lost to rounding.
const HYPOTHESIS_RTOL: f64 = 1e-12;

/// Result of checking a reverse Cauchy–Schwarz hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReverseCs {
    pub holds_pre: bool,
    /// The lower bound on `⟨f, g⟩` implied when the hypothesis holds.
    pub lower: f64,
}

/// If `‖f − g‖² ≤ D (‖f‖² + ‖g‖²)` then `⟨f, g⟩ ≥ (1 − D)/2 · (‖f‖² + ‖g‖²)`.
pub fn reverse_cs_d(f: &DVector<f64>, g: &DVector<f64>, d: f64) -> ReverseCs {
    let total = f.norm_squared() + g.norm_squared();
    ReverseCs {
        holds_pre: (f - g).norm_squared() <= d * total * (1.0 + HYPOTHESIS_RTOL),
        lower: 0.5 * (1.0 - d) * total,
    }
}

/// If `‖f − g‖ ≤ K ‖f‖` then `⟨f, g⟩ ≥ (1 − K)/(1 + (1 − K)²) · (‖f‖² + ‖g‖²)`.
pub fn reverse_cs_k(f: &DVector<f64>, g: &DVector<f64>, k: f64) -> ReverseCs {
    let total = f.norm_squared() + g.norm_squared();
    let s = 1.0 - k;
    ReverseCs {
        holds_pre: (f - g).norm() <= k * f.norm() * (1.0 + HYPOTHESIS_RTOL),
        lower: s / (1.0 + s * s) * total,
    }
}

/// Both sides of `|E^μ f − E^ν f| ≤ 2 √(E^μ f² + E^ν f²) · d_H(μ, ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationGap {
    pub mean_mu: f64,
    pub mean_nu: f64,
    pub gap: f64,
    pub bound: f64,
    pub d_hellinger: f64,
}

/// Evaluates the expectation-gap inequality for a scalar test function,
/// computing every integral against the prior with the same engine.
pub fn expectation_gap_bound<F>(
    problem: &ForwardProblem,
    taylor: &TaylorMisfit,
    f: F,
    engine: &IntegrationEngine,
) -> Result<ExpectationGap>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    taylor.check_integrable(problem.prior())?;
    let nu = taylor.gaussian(problem.prior())?;
    let est: Estimate<7> = engine.expect(problem.prior(), Some(&nu), true, |u| {
        let (a, b) = shifted_pair(problem, taylor, u);
        let (wa, wb) = ((-a).exp(), (-b).exp());
        let fu = f(u);
        [
            (-0.5 * (a + b)).exp(),
            wa,
            wb,
            fu * wa,
            fu * wb,
            fu * fu * wa,
            fu * fu * wb,
        ]
    })?;
    let [inner, za, zb, fa, fb, f2a, f2b] = est.value;
    let radicand = 1.0 - inner / (za * zb).sqrt();
    if radicand < -RADICAND_CLAMP {
        return Err(Error::Engine(format!(
            "Hellinger radicand {radicand:e} is negative beyond rounding"
        )));
    }
    let d_hellinger = radicand.max(0.0).sqrt();
    let (mean_mu, mean_nu) = (fa / za, fb / zb);
    Ok(ExpectationGap {
        mean_mu,
        mean_nu,
        gap: (mean_mu - mean_nu).abs(),
        bound: 2.0 * (f2a / za + f2b / zb).sqrt() * d_hellinger,
        d_hellinger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{find_map, MapOptions};
    use crate::problem::{builtin_problem, BuiltinOptions};
    use approx::assert_relative_eq;

    fn setup(name: &str, opts: &BuiltinOptions) -> (ForwardProblem, MapResult, TaylorMisfit) {
        let p = builtin_problem(name, opts).unwrap();
        let r = find_map(&p, &DVector::zeros(p.dim()), &MapOptions::default()).unwrap();
        let t = TaylorMisfit::from_map(&p, &r).unwrap();
        (p, r, t)
    }

    #[test]
    fn linear_model_has_zero_distance_and_constants() {
        let (p, r, t) = setup("linear", &BuiltinOptions::default());
        let e = IntegrationEngine::default_for_dim(2);
        assert!(hellinger(&p, &t, &e).unwrap().distance <= 1e-8);
        for c in [bound_prop61(&p, &t, &r, &e).unwrap(), bound_cor63(&p, &t, &r, &e).unwrap()] {
            assert!(c.k_value <= 1e-8, "{c:?}");
            assert!(c.valid);
            assert!(c.det_disagreement() <= 1e-10);
        }
    }

    #[test]
    fn determinant_forms_agree_on_builtins() {
        for (name, opts) in [
            ("exp1d", BuiltinOptions::with_y(-2.0)),
            ("exp1d", BuiltinOptions::with_y(2.0)),
            ("quad2d", BuiltinOptions::default()),
        ] {
            let (p, r, t) = setup(name, &opts);
            let c = bound_prop61(&p, &t, &r, &IntegrationEngine::default_for_dim(p.dim())).unwrap();
            assert!(c.det_disagreement() <= 1e-10, "{name}: {c:?}");
        }
    }

    #[test]
    fn corollary_is_weaker_on_exp_examples() {
        for y in [-2.0, 2.0] {
            let (p, r, t) = setup("exp1d", &BuiltinOptions::with_y(y));
            let e = IntegrationEngine::gauss_hermite(96);
            let a = bound_prop61(&p, &t, &r, &e).unwrap();
            let b = bound_cor63(&p, &t, &r, &e).unwrap();
            assert!(b.k_value > a.k_value);
            let d = hellinger(&p, &t, &e).unwrap().distance;
            assert!(a.valid && b.valid);
            assert!(d <= a.hellinger_bound && d <= b.hellinger_bound);
        }
    }

    #[test]
    fn large_misfit_does_not_underflow() {
        let (p, r, t) = setup(
            "exp1d",
            &BuiltinOptions {
                y: Some(vec![-30.0]),
                gamma: Some(0.5),
                ..BuiltinOptions::default()
            },
        );
        assert!(t.value > 1000.0);
        let e = IntegrationEngine::gauss_hermite(96).with_centering(crate::Centering::Laplace);
        let d = hellinger(&p, &t, &e).unwrap();
        assert!(d.distance > 0.0 && d.distance < 1.0);
        let c = bound_prop61(&p, &t, &r, &e).unwrap();
        assert!(c.k_value.is_finite() && c.k_value > 0.0);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        for y in [-2.0, 2.0] {
            let (p, _, t) = setup("exp1d", &BuiltinOptions::with_y(y));
            let gh = hellinger(&p, &t, &IntegrationEngine::gauss_hermite(64)).unwrap();
            let mc = hellinger(&p, &t, &IntegrationEngine::monte_carlo(1_000_000, 5)).unwrap();
            assert_eq!(gh.std_error, 0.0);
            assert!(mc.std_error > 0.0);
            assert!(
                (gh.distance - mc.distance).abs() <= 3.0 * mc.std_error,
                "y={y}: {gh:?} vs {mc:?}"
            );
        }
    }

    #[test]
    fn bound_is_monotone() {
        let mut prev = bound_from_k(0.0);
        assert_eq!(prev, 0.0);
        for i in 1..=1000 {
            let k = i as f64 / 1000.0;
            let b = bound_from_k(k);
            assert!(b > prev);
            prev = b;
        }
        assert_relative_eq!(bound_from_k(1.0), 1.0);
        assert_relative_eq!(bound_from_k(0.46621), 0.41128, max_relative = 1e-4);
        assert_relative_eq!(bound_from_k(0.55328), 0.50517, max_relative = 1e-4);
        assert_relative_eq!(bound_from_k(0.13648), 0.10330, max_relative = 1e-4);
        assert_relative_eq!(bound_from_k(0.17422), 0.13434, max_relative = 1e-4);
    }

    #[test]
    fn reverse_cs_special_cases() {
        let f = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let r = reverse_cs_d(&f, &f, 0.3);
        assert!(r.holds_pre);
        assert_relative_eq!(r.lower, 0.7 * f.norm_squared(), max_relative = 1e-15);

        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert!(!reverse_cs_d(&e1, &e2, 0.999).holds_pre);
        let r = reverse_cs_d(&e1, &e2, 1.0);
        assert!(r.holds_pre);
        assert_eq!(r.lower, 0.0);

        let k = 0.4;
        let r = reverse_cs_k(&f, &f, k);
        assert!(r.holds_pre);
        assert!(r.lower <= f.norm_squared());
        let g = &f * (1.0 - k);
        let r = reverse_cs_k(&f, &g, k);
        assert!(r.holds_pre);
        assert!(f.dot(&g) >= r.lower - 1e-12);
    }

    #[test]
    fn expectation_gap_constant_function() {
        let (p, _, t) = setup("exp1d", &BuiltinOptions::with_y(-2.0));
        let g = expectation_gap_bound(&p, &t, |_| 3.0, &IntegrationEngine::gauss_hermite(96)).unwrap();
        assert!(g.gap <= 1e-12);
        assert!(g.bound > 0.0);
    }

    #[test]
    fn divergent_surrogate_is_reported() {
        // Strongly negative curvature of Φ at the anchor makes exp(−TΦ)
        // non-integrable against the prior.
        let p = builtin_problem("exp1d", &BuiltinOptions::with_y(50.0)).unwrap();
        let t = TaylorMisfit::at(&p, &DVector::from_element(1, 0.0)).unwrap();
        assert!(t.hess.matrix()[(0, 0)] < -1.0);
        assert!(matches!(
            hellinger(&p, &t, &IntegrationEngine::gauss_hermite(32)),
            Err(Error::DivergentIntegral { .. })
        ));
    }
}
