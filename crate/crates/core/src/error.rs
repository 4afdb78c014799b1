use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("eigenvalue {re:.3e}{im:+.3e}i lies within {tol:.1e} of the imaginary axis")]
    AxisPole { re: f64, im: f64, tol: f64 },

    #[error("system is not stable: {0}")]
    Unstable(String),

    #[error("{0} requires zero feedthrough")]
    NotStrictlyProper(&'static str),

    #[error("matrix equation has no unique solution: {0}")]
    NonUnique(String),

    #[error("riccati solve failed: {0}")]
    Riccati(String),

    #[error("controller is not stabilizing (max real part of closed-loop spectrum {0:.3e})")]
    NotStabilizing(f64),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("rational fit is unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        detail: detail.into(),
    }
}
