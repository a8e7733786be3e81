use thiserror::Error;

/// Errors produced by the estimation and bound computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("symmetric eigenvalue sweep did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("sensing matrix does not have full row rank")]
    RankDeficient,

    #[error("norm limit radius must be positive, got {0}")]
    InvalidRadius(f64),

    #[error("v lies outside the open ball of radius 1/sigma_e (|v|^2 sigma_e^2 = {0})")]
    InfeasibleV(f64),

    #[error("Fisher information matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularFim { min_eigenvalue: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
