//! Laplace approximation of Bayesian inverse-problem posteriors under a
//! Gaussian prior, with numerically certified Hellinger-distance bounds.
//!
//! The crate is organised bottom-up:
//!
//! * [`gaussian`]: Gaussian measures on `R^n`, closed-form Gaussian integrals.
//! * [`quadrature`]: integration engines for expectations against the prior.
//! * [`problem`]: the forward problem `y = G(u) + η`, the misfit `Φ` and the
//!   regularised objective `I`, plus built-in models.
//! * [`derivcheck`]: finite-difference derivative checks.
//! * [`laplace`]: MAP search, the Taylor surrogate `TΦ` and the Laplace measure.
//! * [`hellinger`]: Hellinger distance, reverse Cauchy–Schwarz utilities and
//!   the two certified bounds.
//! * [`calibration`]: parameter sweeps for the one-dimensional `exp` model.

pub mod calibration;
pub mod derivcheck;
mod error;
pub mod gaussian;
pub mod hellinger;
pub mod laplace;
mod linalg;
pub mod problem;
pub mod quadrature;

pub use error::{Error, Result};
pub use gaussian::{GaussianMeasure, SymmetricOperator};
pub use hellinger::{BoundCertificate, BoundMethod};
pub use laplace::{MapOptions, MapResult, TaylorMisfit};
pub use problem::{ForwardModel, ForwardProblem};
pub use quadrature::{Centering, EngineKind, IntegrationEngine};
