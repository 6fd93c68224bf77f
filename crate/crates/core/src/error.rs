use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("vectors are linearly dependent (smallest Gram eigenvalue {min_eigenvalue:.3e})")]
    Rank { min_eigenvalue: f64 },

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown outcome label `{0}`")]
    UnknownLabel(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "solver did not converge after {iterations} iterations \
         (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e}, gap {gap:.3e})"
    )]
    Convergence {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        gap: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
