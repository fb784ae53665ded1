use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("Gaussian integral precondition violated: eigenvalue {eigenvalue} of Q^1/2 M Q^1/2 is not below 1")]
    ConditionViolated { eigenvalue: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (|grad I| = {grad_norm:e})")]
    MaxIterations { iterations: usize, grad_norm: f64 },

    #[error("line search stalled after {iterations} iterations (|grad I| = {grad_norm:e})")]
    LineSearchStalled { iterations: usize, grad_norm: f64 },

    #[error("Hessian of I at the stationary point is indefinite (smallest eigenvalue {min_eigenvalue:e})")]
    IndefiniteHessianAtOptimum { min_eigenvalue: f64 },

    #[error("exp(-TΦ) is not integrable against the prior (smallest eigenvalue of Id + C^1/2 HΦ C^1/2 is {min_eigenvalue:e})")]
    DivergentIntegral { min_eigenvalue: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown built-in model `{0}`")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),

    #[error("integration engine: {0}")]
    Engine(String),
}
