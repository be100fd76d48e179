use thiserror::Error;

use crate::expr::ExprError;
use crate::membranes::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("invalid multi-index {index:?} for a form on a {dim}-dimensional chart")]
    InvalidIndex { index: Vec<usize>, dim: usize },
    #[error("endpoints do not match: gap {gap:e} exceeds tolerance {tol:e}")]
    EndpointMismatch { gap: f64, tol: f64 },
    #[error("faces do not match: gap {gap:e} exceeds tolerance {tol:e}")]
    FaceMismatch { gap: f64, tol: f64 },
    #[error("quadrature did not converge: value {value:e}, error estimate {estimate:e}")]
    NonConvergence { value: f64, estimate: f64 },
    #[error("invalid quadrature configuration: {0}")]
    Config(String),
    #[error("integrand violates condition (*): {0}")]
    Integrand(Violation),
    #[error("shuffle does not belong to the requested family: {0}")]
    ShuffleFamily(String),
    #[error("1-form w{index} is not closed (|dw| up to {magnitude:e})")]
    NotClosed { index: usize, magnitude: f64 },
    #[error("2-form basis is not pointwise independent on the sample set")]
    DependentBasis,
    #[error("basis does not span the wedges: residual {residual:e} exceeds {tol:e}")]
    BasisInsufficient { residual: f64, tol: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
