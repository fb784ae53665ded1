//! Gaussian measures on `R^n` and the closed-form Gaussian integrals
//!
//! ```text
//! ∫ exp(½⟨Mu,u⟩ + ⟨b,u⟩) dN(0,Q)(u)
//!     = exp(½ |(1 − Q^½MQ^½)^(-½) Q^½ b|²) / √det(1 − Q^½MQ^½)
//! ```
//!
//! and its complex-shifted variant with `b = b₁ + i b₂`.
//!
//! Sampling uses ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded from a `u64`
//! and the ziggurat standard-normal sampler of `rand_distr`. The stream for
//! a given seed is bit-reproducible across platforms.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{check_finite, check_square, check_symmetric, min_eigenvalue, sym_eigen, sym_sqrt};
use crate::{Error, Result};

/// Complex scalar used by the characteristic-function routines.
pub type Complex64 = nalgebra::Complex<f64>;

/// Reconstruction tolerance (relative Frobenius) for the cached Cholesky factor.
const CHOLESKY_RTOL: f64 = 1e-10;

/// Rejection margin for the spectral precondition `ρ(Q^½MQ^½) < 1`.
const SPECTRAL_MARGIN: f64 = 1e-10;

/// A symmetric matrix. Holds operators such as `M` in the Gaussian integral
/// formulas and the Hessians `HI(u_MAP)`, `HΦ(u_MAP)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOperator(DMatrix<f64>);

impl SymmetricOperator {
    /// Wraps `matrix` after checking symmetry entry-pair-wise to `1e-12` relative.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_square(&matrix, "symmetric operator")?;
        check_finite(&matrix, "symmetric operator")?;
        check_symmetric(&matrix)?;
        Ok(Self(matrix))
    }

    /// Replaces `matrix` by its symmetric part `(A + Aᵀ)/2`.
    pub fn symmetrized(matrix: &DMatrix<f64>) -> Result<Self> {
        check_square(matrix, "symmetric operator")?;
        check_finite(matrix, "symmetric operator")?;
        Ok(Self(crate::linalg::symmetrize(matrix)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `A[h, h] = hᵀAh`.
    pub fn quadratic_form(&self, h: &DVector<f64>) -> f64 {
        h.dot(&(&self.0 * h))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.0.clone().cholesky().is_some() && self.min_eigenvalue() > 0.0
    }
}

/// A Gaussian measure `N(mean, covariance)` on `R^n` with its Cholesky factor cached.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_square(&covariance, "covariance")?;
        if mean.len() != covariance.nrows() {
            return Err(Error::DimensionMismatch {
                what: "mean",
                expected: covariance.nrows(),
                got: mean.len(),
            });
        }
        check_finite(&covariance, "covariance")?;
        if !mean.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("mean".into()));
        }
        check_symmetric(&covariance)?;
        let chol = covariance.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            min_eigenvalue: min_eigenvalue(&covariance),
        })?;
        let l = chol.l();
        let resid = (&l * l.transpose() - &covariance).norm();
        if resid > CHOLESKY_RTOL * covariance.norm() {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min_eigenvalue(&covariance),
            });
        }
        Ok(Self {
            mean,
            covariance,
            chol,
            lower: l,
        })
    }

    /// `N(0, covariance)`.
    pub fn centered(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        Self::new(DVector::zeros(n), covariance)
    }

    pub fn standard(n: usize) -> Self {
        Self::centered(DMatrix::identity(n, n)).expect("identity covariance")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower-triangular `L` with `L Lᵀ = C`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Symmetric square root `C^½`.
    pub fn covariance_sqrt(&self) -> DMatrix<f64> {
        sym_sqrt(&self.covariance).expect("covariance checked positive definite")
    }

    /// `C⁻¹`.
    pub fn precision(&self) -> DMatrix<f64> {
        crate::linalg::symmetrize(&self.chol.inverse())
    }

    /// `C⁻¹ v` by Cholesky solve.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `C⁻¹ B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn log_det_covariance(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    fn check_point(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Half the squared Cameron–Martin norm of `u − mean`, `½(u−m)ᵀC⁻¹(u−m)`.
    pub fn half_mahalanobis_sq(&self, u: &DVector<f64>) -> Result<f64> {
        self.check_point(u)?;
        let d = u - &self.mean;
        let w = self.lower.solve_lower_triangular(&d).expect("nonsingular factor");
        Ok(0.5 * w.norm_squared())
    }

    /// Lebesgue log-density `−½(u−m)ᵀC⁻¹(u−m) − ½ log det(2πC)`.
    pub fn log_density(&self, u: &DVector<f64>) -> Result<f64> {
        let q = self.half_mahalanobis_sq(u)?;
        let n = self.dim() as f64;
        Ok(-q - 0.5 * (n * (2.0 * PI).ln() + self.log_det_covariance()))
    }

    /// `count` samples as the columns of an `n × count` matrix, from a fresh
    /// ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_with(&mut rng, count))
    }

    /// Draws `count` samples from a caller-owned generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> DMatrix<f64> {
        let n = self.dim();
        let z = DMatrix::from_fn(n, count, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut out = &self.lower * z;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }

    /// Maps a standard-normal vector `z` to `mean + L z`.
    pub fn transform_standard(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.lower * z
    }
}

/// Spectral data of `1 − Q^½MQ^½` shared by the real and complex integrals.
struct DpzParts {
    /// Eigenvalues of `Q^½MQ^½`.
    spectrum: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    q_sqrt: DMatrix<f64>,
}

impl DpzParts {
    fn new(prior: &GaussianMeasure, m: &SymmetricOperator) -> Result<Self> {
        if prior.mean().iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidArgument(
                "Gaussian integral formulas require a centred prior".into(),
            ));
        }
        if m.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                what: "operator M",
                expected: prior.dim(),
                got: m.dim(),
            });
        }
        let q_sqrt = prior.covariance_sqrt();
        let s = crate::linalg::symmetrize(&(&q_sqrt * m.matrix() * &q_sqrt));
        let eig = sym_eigen(&s);
        if let Some(&worst) = eig
            .eigenvalues
            .iter()
            .max_by(|a, b| a.total_cmp(b))
        {
            if worst >= 1.0 - SPECTRAL_MARGIN {
                return Err(Error::ConditionViolated { eigenvalue: worst });
            }
        }
        Ok(Self {
            spectrum: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            q_sqrt,
        })
    }

    fn check_vector(&self, b: &DVector<f64>) -> Result<()> {
        if b.len() != self.spectrum.len() {
            return Err(Error::DimensionMismatch {
                what: "shift vector",
                expected: self.spectrum.len(),
                got: b.len(),
            });
        }
        Ok(())
    }

    /// `Vᵀ Q^½ b`, the shift in the eigenbasis of `Q^½MQ^½`.
    fn rotate(&self, b: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.tr_mul(&(&self.q_sqrt * b))
    }

    /// `⟨L b₁, b₂⟩` with `L = Q^½(1 − Q^½MQ^½)^(-1)Q^½`, from rotated shifts.
    fn l_form(&self, w1: &DVector<f64>, w2: &DVector<f64>) -> f64 {
        self.spectrum
            .iter()
            .zip(w1.iter().zip(w2.iter()))
            .map(|(s, (a, b))| a * b / (1.0 - s))
            .sum()
    }

    fn sqrt_det(&self) -> f64 {
        self.spectrum.iter().map(|s| 1.0 - s).product::<f64>().sqrt()
    }
}

/// `∫ exp(½⟨Mu,u⟩ + ⟨b,u⟩) dN(0,Q)(u)` in closed form.
///
/// Fails with [`Error::ConditionViolated`] unless every eigenvalue of
/// `Q^½MQ^½` is below `1 − 1e-10`.
pub fn gauss_integral_real(
    prior: &GaussianMeasure,
    m: &SymmetricOperator,
    b: &DVector<f64>,
) -> Result<f64> {
    let parts = DpzParts::new(prior, m)?;
    parts.check_vector(b)?;
    let w = parts.rotate(b);
    let q11 = parts.l_form(&w, &w);
    Ok((0.5 * q11).exp() / parts.sqrt_det())
}

/// `∫ exp(½⟨Mu,u⟩ + ⟨b₁ + i b₂, u⟩) dN(0,Q)(u)`
/// `= exp(½⟨Lb₁,b₁⟩ + i⟨Lb₁,b₂⟩ − ½⟨Lb₂,b₂⟩) / √det(1 − Q^½MQ^½)`.
///
/// With `b₂ = 0` the result is bit-identical to [`gauss_integral_real`].
pub fn gauss_integral_complex(
    prior: &GaussianMeasure,
    m: &SymmetricOperator,
    b1: &DVector<f64>,
    b2: &DVector<f64>,
) -> Result<Complex64> {
    let parts = DpzParts::new(prior, m)?;
    parts.check_vector(b1)?;
    parts.check_vector(b2)?;
    let w1 = parts.rotate(b1);
    let w2 = parts.rotate(b2);
    let q11 = parts.l_form(&w1, &w1);
    let q12 = parts.l_form(&w1, &w2);
    let q22 = parts.l_form(&w2, &w2);
    let modulus = (0.5 * q11 - 0.5 * q22).exp() / parts.sqrt_det();
    if q12 == 0.0 {
        return Ok(Complex64::new(modulus, 0.0));
    }
    Ok(Complex64::from_polar(modulus, q12))
}

fn conjugated_spectrum(prior_cov: &DMatrix<f64>, h: &SymmetricOperator) -> Result<DVector<f64>> {
    check_square(prior_cov, "prior covariance")?;
    if h.dim() != prior_cov.nrows() {
        return Err(Error::DimensionMismatch {
            what: "operator",
            expected: prior_cov.nrows(),
            got: h.dim(),
        });
    }
    let c_sqrt = sym_sqrt(prior_cov)?;
    let conj = crate::linalg::symmetrize(&(&c_sqrt * h.matrix() * &c_sqrt));
    Ok(sym_eigen(&conj).eigenvalues)
}

/// `det(C^½ h C^½)` via symmetric eigendecomposition; `h` must be positive
/// definite after conjugation.
pub fn det_factor(prior_cov: &DMatrix<f64>, h: &SymmetricOperator) -> Result<f64> {
    let spectrum = conjugated_spectrum(prior_cov, h)?;
    let min = spectrum.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    Ok(spectrum.product())
}

/// `det(Id + C^½ hΦ C^½)`, the same determinant expressed through the misfit
/// Hessian; positive definiteness of `Id + C^½ hΦ C^½` is required.
pub fn det_factor_shifted(prior_cov: &DMatrix<f64>, h_phi: &SymmetricOperator) -> Result<f64> {
    let spectrum = conjugated_spectrum(prior_cov, h_phi)?.add_scalar(1.0);
    let min = spectrum.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    Ok(spectrum.product())
}
