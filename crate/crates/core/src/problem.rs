//! The inverse problem `y = G(u) + η`, `η ~ N(0, Γ)`, under a centred
//! Gaussian prior `μ₀ = N(0, C₀)`.
//!
//! Norm conventions: `‖v‖_Γ = ‖Γ^{-½}v‖` and `‖u‖_{C₀} = ‖C₀^{-½}u‖`, so
//!
//! ```text
//! Φ(u) = ½ (y − G(u))ᵀ Γ⁻¹ (y − G(u))
//! I(u) = Φ(u) + ½ uᵀ C₀⁻¹ u
//! ```

use std::fmt;
use std::sync::Arc;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derivcheck::{fd_jacobian, fd_jacobian_derivative};
use crate::gaussian::{GaussianMeasure, SymmetricOperator};
use crate::{Error, Result};

/// A forward operator `G: R^n → R^m` with its derivatives.
///
/// Implementations must be reentrant unless [`ForwardModel::reentrant`]
/// returns `false`, in which case the integration engines evaluate it on a
/// single thread.
pub trait ForwardModel: Send + Sync + fmt::Debug {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, u: &DVector<f64>) -> DVector<f64>;
    /// `DG(u)`, an `m × n` matrix.
    fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64>;
    /// `HG(u)` as `m` symmetric `n × n` matrices, or `None` to fall back to
    /// finite differences of the Jacobian.
    fn hessian(&self, _u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }
    fn reentrant(&self) -> bool {
        true
    }
}

/// `G(u) = exp(u)` on `R`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpModel;

impl ForwardModel for ExpModel {
    fn dim_in(&self) -> usize {
        1
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        u.map(f64::exp)
    }
    fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, u[0].exp())
    }
    fn hessian(&self, u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::from_element(1, 1, u[0].exp())])
    }
}

/// `G(u) = A u`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    a: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidArgument("linear operator must be non-empty".into()));
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl ForwardModel for LinearModel {
    fn dim_in(&self) -> usize {
        self.a.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.a * u
    }
    fn jacobian(&self, _u: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
    fn hessian(&self, _u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let n = self.a.ncols();
        Some(vec![DMatrix::zeros(n, n); self.a.nrows()])
    }
}

/// Componentwise quadratic map `G_i(u) = u_i + c_i u_i²`.
#[derive(Debug, Clone)]
pub struct ComponentwiseQuadratic {
    coeffs: DVector<f64>,
}

impl ComponentwiseQuadratic {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }
}

impl ForwardModel for ComponentwiseQuadratic {
    fn dim_in(&self) -> usize {
        self.coeffs.len()
    }
    fn dim_out(&self) -> usize {
        self.coeffs.len()
    }
    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        u.zip_map(&self.coeffs, |x, c| x + c * x * x)
    }
    fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&u.zip_map(&self.coeffs, |x, c| 1.0 + 2.0 * c * x))
    }
    fn hessian(&self, _u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let n = self.coeffs.len();
        Some(
            (0..n)
                .map(|k| {
                    let mut h = DMatrix::zeros(n, n);
                    h[(k, k)] = 2.0 * self.coeffs[k];
                    h
                })
                .collect(),
        )
    }
}

/// A forward map given by one expression per output in the variables
/// `u0, u1, …` (evalexpr syntax, e.g. `math::exp(u0) * u1`). Derivatives come
/// from finite differences.
pub struct ExpressionModel {
    dim_in: usize,
    sources: Vec<String>,
    outputs: Vec<Node<DefaultNumericTypes>>,
}

impl fmt::Debug for ExpressionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpressionModel")
            .field("dim_in", &self.dim_in)
            .field("outputs", &self.sources)
            .finish()
    }
}

impl ExpressionModel {
    pub fn new(dim_in: usize, outputs: &[String]) -> Result<Self> {
        if dim_in == 0 || outputs.is_empty() {
            return Err(Error::InvalidSpec(
                "expression model needs at least one input and one output".into(),
            ));
        }
        let compiled = outputs
            .iter()
            .map(|src| {
                build_operator_tree::<DefaultNumericTypes>(src)
                    .map_err(|e| Error::InvalidSpec(format!("expression `{src}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Self {
            dim_in,
            sources: outputs.to_vec(),
            outputs: compiled,
        };
        // Surface unknown identifiers and type errors at load time.
        model.try_eval(&DVector::zeros(dim_in))?;
        Ok(model)
    }

    fn try_eval(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (i, x) in u.iter().enumerate() {
            ctx.set_value(format!("u{i}"), Value::Float(*x))
                .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        }
        let vals = self
            .outputs
            .iter()
            .zip(&self.sources)
            .map(|(node, src)| {
                node.eval_number_with_context(&ctx)
                    .map_err(|e| Error::InvalidSpec(format!("expression `{src}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(DVector::from_vec(vals))
    }
}

impl ForwardModel for ExpressionModel {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.outputs.len()
    }
    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        self.try_eval(u)
            .unwrap_or_else(|_| DVector::from_element(self.outputs.len(), f64::NAN))
    }
    fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian(|v| self.eval(v), u)
    }
}

/// The full problem: model, noise covariance `Γ`, prior `N(0, C₀)`, data `y`.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    model: Arc<dyn ForwardModel>,
    noise: GaussianMeasure,
    prior: GaussianMeasure,
    data: DVector<f64>,
    fd_fallback: bool,
}

impl ForwardProblem {
    pub fn new(
        model: Arc<dyn ForwardModel>,
        noise_cov: DMatrix<f64>,
        prior_cov: DMatrix<f64>,
        data: DVector<f64>,
    ) -> Result<Self> {
        let (n, m) = (model.dim_in(), model.dim_out());
        if prior_cov.nrows() != n || prior_cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "prior covariance",
                expected: n,
                got: prior_cov.nrows(),
            });
        }
        if noise_cov.nrows() != m || noise_cov.ncols() != m {
            return Err(Error::DimensionMismatch {
                what: "noise covariance",
                expected: m,
                got: noise_cov.nrows(),
            });
        }
        if data.len() != m {
            return Err(Error::DimensionMismatch {
                what: "data",
                expected: m,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("data".into()));
        }
        Ok(Self {
            model,
            noise: GaussianMeasure::centered(noise_cov)?,
            prior: GaussianMeasure::centered(prior_cov)?,
            data,
            fd_fallback: true,
        })
    }

    /// Disables the finite-difference fallback for `HG`.
    pub fn without_fd_fallback(mut self) -> Self {
        self.fd_fallback = false;
        self
    }

    pub fn with_data(&self, data: DVector<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                what: "data",
                expected: self.data.len(),
                got: data.len(),
            });
        }
        let mut p = self.clone();
        p.data = data;
        Ok(p)
    }

    pub fn model(&self) -> &dyn ForwardModel {
        self.model.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.model.dim_in()
    }

    pub fn prior(&self) -> &GaussianMeasure {
        &self.prior
    }

    pub fn noise_covariance(&self) -> &DMatrix<f64> {
        self.noise.covariance()
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    fn check_point(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter",
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.model.eval(u);
        if g.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                what: "model output",
                expected: self.data.len(),
                got: g.len(),
            });
        }
        Ok(&self.data - g)
    }

    /// `Φ(u) = ½ (y − G(u))ᵀ Γ⁻¹ (y − G(u))`.
    pub fn misfit_phi(&self, u: &DVector<f64>) -> Result<f64> {
        self.check_point(u)?;
        let r = self.residual(u)?;
        self.noise.half_mahalanobis_sq(&r)
    }

    /// `½ uᵀ C₀⁻¹ u`.
    pub fn prior_term(&self, u: &DVector<f64>) -> Result<f64> {
        self.prior.half_mahalanobis_sq(u)
    }

    /// `I(u) = Φ(u) + ½ uᵀ C₀⁻¹ u`.
    pub fn objective_i(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(self.misfit_phi(u)? + self.prior_term(u)?)
    }

    /// `∇Φ(u) = −DG(u)ᵀ Γ⁻¹ (y − G(u))`.
    pub fn grad_phi(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(u)?;
        let r = self.residual(u)?;
        let j = self.model.jacobian(u);
        let g = -(j.transpose() * self.noise.solve(&r));
        finite_vec(g, "gradient of Φ")
    }

    /// `∇I(u) = ∇Φ(u) + C₀⁻¹ u`.
    pub fn grad_i(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.grad_phi(u)? + self.prior.solve(u);
        finite_vec(g, "gradient of I")
    }

    /// `HΦ(u)[h₁,h₂] = ⟨DG h₁, Γ⁻¹ DG h₂⟩ − ⟨HG[h₁,h₂], Γ⁻¹(y − G(u))⟩`.
    pub fn hess_phi(&self, u: &DVector<f64>) -> Result<SymmetricOperator> {
        self.check_point(u)?;
        let r = self.residual(u)?;
        let weighted = self.noise.solve(&r);
        let j = self.model.jacobian(u);
        let mut h = j.transpose() * self.noise.solve_matrix(&j);
        let second = match self.model.hessian(u) {
            Some(hg) => hg,
            None if self.fd_fallback => {
                let model = &self.model;
                fd_jacobian_derivative(|v| model.jacobian(v), u)
            }
            None => {
                return Err(Error::InvalidArgument(
                    "model supplies no Hessian and the finite-difference fallback is disabled"
                        .into(),
                ))
            }
        };
        if second.len() != r.len() {
            return Err(Error::DimensionMismatch {
                what: "model Hessian",
                expected: r.len(),
                got: second.len(),
            });
        }
        for (hk, wk) in second.iter().zip(weighted.iter()) {
            h -= hk * *wk;
        }
        if !h.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("Hessian of Φ".into()));
        }
        SymmetricOperator::symmetrized(&h)
    }

    /// `HI(u) = HΦ(u) + C₀⁻¹`.
    pub fn hess_i(&self, u: &DVector<f64>) -> Result<SymmetricOperator> {
        let h = self.hess_phi(u)?.into_matrix() + self.prior.precision();
        SymmetricOperator::symmetrized(&h)
    }
}

fn finite_vec(v: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Names accepted by [`builtin_problem`].
pub const BUILTIN_MODELS: [&str; 3] = ["exp1d", "linear", "quad2d"];

/// Seed of the fixed operator behind the `linear` built-in.
const LINEAR_BUILTIN_SEED: u64 = 0x5eed_0001;

/// Overrides for a built-in problem.
///
/// `sigma` and `gamma` scale the prior and noise standard deviations
/// (`C₀ ← σ² C₀`, `Γ ← γ² Γ`); the base covariances of `exp1d` are both 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuiltinOptions {
    pub y: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
}

impl BuiltinOptions {
    pub fn with_y(y: f64) -> Self {
        Self {
            y: Some(vec![y]),
            ..Self::default()
        }
    }
}

/// The fixed 3×2 operator of the `linear` built-in.
pub fn linear_builtin_operator() -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(LINEAR_BUILTIN_SEED);
    DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0))
}

/// Built-in problems:
///
/// * `exp1d`: `G(u) = eᵘ`, `Γ = γ²`, `C₀ = σ²`, default `y = 2`, `σ = γ = 1`.
/// * `linear`: `G(u) = A u` with a fixed seeded `A ∈ R^{3×2}`, `Γ = 0.25 I`,
///   `C₀ = I`.
/// * `quad2d`: `G_i(u) = u_i + c_i u_i²` with `c = (0.4, −0.3)`,
///   `Γ = 0.2 I`, correlated prior.
pub fn builtin_problem(name: &str, opts: &BuiltinOptions) -> Result<ForwardProblem> {
    let (model, noise, prior, y): (Arc<dyn ForwardModel>, DMatrix<f64>, DMatrix<f64>, Vec<f64>) =
        match name {
            "exp1d" => (
                Arc::new(ExpModel),
                DMatrix::identity(1, 1),
                DMatrix::identity(1, 1),
                vec![2.0],
            ),
            "linear" => (
                Arc::new(LinearModel::new(linear_builtin_operator())?),
                DMatrix::identity(3, 3) * 0.25,
                DMatrix::identity(2, 2),
                vec![0.4, -0.2, 0.3],
            ),
            "quad2d" => (
                Arc::new(ComponentwiseQuadratic::new(DVector::from_vec(vec![0.4, -0.3]))),
                DMatrix::identity(2, 2) * 0.2,
                DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
                vec![0.8, -0.5],
            ),
            other => return Err(Error::UnknownModel(other.to_string())),
        };
    let scale = |s: Option<f64>, what: &str| -> Result<f64> {
        match s {
            None => Ok(1.0),
            Some(v) if v > 0.0 && v.is_finite() => Ok(v * v),
            Some(v) => Err(Error::InvalidArgument(format!("{what} must be positive, got {v}"))),
        }
    };
    let noise = noise * scale(opts.gamma, "gamma")?;
    let prior = prior * scale(opts.sigma, "sigma")?;
    let y = opts.y.clone().unwrap_or(y);
    ForwardProblem::new(model, noise, prior, DVector::from_vec(y))
}

/// A dense matrix in row-major order with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixSpec {
    pub fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::InvalidSpec(format!(
                "{what}: {}×{} matrix needs {} entries, found {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }
}

/// Model section of a problem spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    /// A built-in model name.
    Builtin(String),
    /// `{"linear": {rows, cols, data}}`.
    Linear { linear: MatrixSpec },
    /// `{"expression": {"dim_in": n, "outputs": ["...", ...]}}`.
    Expression { expression: ExpressionSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionSpec {
    pub dim_in: usize,
    pub outputs: Vec<String>,
}

/// Problem spec file:
/// `{"model": name | {"linear": M} | {"expression": {...}}, "y": [...], "gamma": M, "prior_cov": M}`
/// with every matrix `M = {"rows", "cols", "data"}` in row-major order.
/// For built-in names, `y`, `gamma` and `prior_cov` override the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<MatrixSpec>,
    #[serde(default)]
    pub prior_cov: Option<MatrixSpec>,
}

impl ProblemSpec {
    /// Parses a spec; errors carry serde's line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn build(&self) -> Result<ForwardProblem> {
        let model: Arc<dyn ForwardModel> = match &self.model {
            ModelSpec::Builtin(name) => {
                let base = builtin_problem(name, &BuiltinOptions::default())?;
                let noise = match &self.gamma {
                    Some(m) => m.to_matrix("gamma")?,
                    None => base.noise_covariance().clone(),
                };
                let prior = match &self.prior_cov {
                    Some(m) => m.to_matrix("prior_cov")?,
                    None => base.prior().covariance().clone(),
                };
                let y = match &self.y {
                    Some(y) => DVector::from_vec(y.clone()),
                    None => base.data().clone(),
                };
                return ForwardProblem::new(base.model.clone(), noise, prior, y);
            }
            ModelSpec::Linear { linear } => Arc::new(LinearModel::new(linear.to_matrix("linear")?)?),
            ModelSpec::Expression { expression } => {
                Arc::new(ExpressionModel::new(expression.dim_in, &expression.outputs)?)
            }
        };
        let need = |field: &str| Error::InvalidSpec(format!("missing field `{field}`"));
        let y = self.y.clone().ok_or_else(|| need("y"))?;
        let gamma = self.gamma.as_ref().ok_or_else(|| need("gamma"))?.to_matrix("gamma")?;
        let prior = self
            .prior_cov
            .as_ref()
            .ok_or_else(|| need("prior_cov"))?
            .to_matrix("prior_cov")?;
        ForwardProblem::new(model, gamma, prior, DVector::from_vec(y))
    }
}
