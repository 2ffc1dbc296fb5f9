use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Norm, domain or solver parameters violate their invariants.
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),
    /// An operation was called outside its documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The zero vector was passed where a nonzero argument is required.
    #[error("the norm is smooth only away from the origin; got the zero vector")]
    ZeroVector,
    /// The numerical dual-norm maximization did not converge.
    #[error("dual norm maximization did not converge after {iterations} iterations (residual {residual:e})")]
    DualNotConverged { iterations: usize, residual: f64 },
    /// A solve finished without meeting its tolerances.
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    /// A requested sampling range is not representable on the grid.
    #[error("infeasible range: {0}")]
    Infeasible(String),
    /// Reading or writing a field dump failed.
    #[error("i/o error: {0}")]
    Io(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
