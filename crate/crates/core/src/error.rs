use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("singular block: {0}")]
    SingularBlock(String),

    #[error("identifiability violated: rho = {0:.6} >= 1")]
    IdentifiabilityViolation(f64),

    #[error("Neumann condition violated: beta = {0:.6} >= 1")]
    NeumannViolation(f64),

    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),

    #[error(
        "no convergence after {iterations} iterations (gradient norm {grad_norm:.3e}, tolerance {tolerance:.3e})"
    )]
    ConvergenceFailure {
        iterations: usize,
        grad_norm: f64,
        tolerance: f64,
    },

    #[error("contrast is not concave along a sampled direction: ratio {ratio:.3e} at distance {distance:.3e}")]
    NotConcave { ratio: f64, distance: f64 },

    #[error("quadrature did not converge: change {change:.3e} under order doubling exceeds {tolerance:.1e}")]
    QuadratureNonConvergence { change: f64, tolerance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
