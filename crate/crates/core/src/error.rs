use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("NotPositiveDefinite: pivot {pivot} at index {index} is not positive")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("ConvergenceFailure: {0}")]
    ConvergenceFailure(&'static str),

    #[error("NoStabilizingSolution: Hamiltonian has eigenvalues on the imaginary axis")]
    NoStabilizingSolution,

    #[error("SingularX1: invariant-subspace block has reciprocal condition {rcond:e}")]
    SingularX1 { rcond: f64 },

    #[error("NotPositiveSemidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("InvalidDof: degrees of freedom {dof} must exceed {bound} for dimension {dim}")]
    InvalidDof { dof: f64, bound: f64, dim: usize },

    #[error("ModeNotInterior: degrees of freedom {dof} must exceed {bound}")]
    ModeNotInterior { dof: f64, bound: f64 },

    #[error("DimensionMismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("AllWeightsDegenerate: none of {count} log weights is finite")]
    AllWeightsDegenerate { count: usize },

    #[error("DegenerateCovariance: gap-filled covariance is singular after ridge repair")]
    DegenerateCovariance,

    #[error("SingularObservedBlock: observed covariance block of column {column} is not positive definite")]
    SingularObservedBlock { column: usize },

    #[error("InvalidInput: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NotPositiveSemidefinite { .. }
                | Error::InvalidDof { .. }
                | Error::ModeNotInterior { .. }
                | Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
