use thiserror::Error;

use crate::grid::CaseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] CaseError),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("the null attack has no defined non-detection probability")]
    NullAttack,

    #[error("tau = {tau} <= 1: the null attack maximizes the non-detection probability")]
    NullAttackOptimal { tau: f64 },

    #[error("the Jacobian is zero; no attack can induce distortion")]
    ZeroJacobian,

    #[error("no attack satisfies the constraints: {0}")]
    NoSolution(String),

    #[error("{what} did not converge (achieved {achieved:e}, requested {requested:e})")]
    NonConvergence {
        what: &'static str,
        achieved: f64,
        requested: f64,
    },

    #[error("infeasible box: {0}")]
    InfeasibleBox(String),

    #[error("invalid attack partition: {0}")]
    Partition(String),

    #[error("sample count {k} is too small: {reason}")]
    SampleCount { k: usize, reason: &'static str },
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            domain,
        }
    }
}
