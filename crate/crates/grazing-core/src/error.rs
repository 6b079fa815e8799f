use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("zero relative velocity")]
    ZeroRelativeVelocity,
    #[error("undefined projector")]
    UndefinedProjector,
    #[error("not a unit vector (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("insufficient nodes for exactness")]
    InsufficientNodes,
    #[error("angle out of domain")]
    AngleOutOfDomain,
    #[error("requires coulomb_log_cutoff variant")]
    RequiresLogCutoff,
    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),
    #[error("non-finite integrand at node {node:?}")]
    NonFinite { node: Vec<f64> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-solvable RHS (degree-0 coefficient {0:e})")]
    NonSolvable(f64),
    #[error("aliasing detected (boundary energy fraction {0:e})")]
    Aliasing(f64),
    #[error("test function class violation: {0}")]
    ClassViolation(String),
    #[error("mobility kind mismatch")]
    KindMismatch,
    #[error("invalid lift bracket: {0}")]
    InvalidLift(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
