use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The unscaled result is not representable.
    #[error("overflow: {0}")]
    Overflow(String),

    /// A quadrature or iterative method did not reach its budget.
    #[error("numerical failure in {what}: achieved error estimate {estimate:e}")]
    NumericalFailure { what: String, estimate: f64 },

    /// Requested refinement exceeds what the underlying grid resolves.
    #[error("resolution error: requested depth {requested}, grid supports {available}")]
    Resolution { requested: usize, available: usize },

    /// A construction would exceed its configured size budget.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// A geometric construction is inconsistent (e.g. covering hole).
    #[error("construction error: {0}")]
    Construction(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(what: impl Into<String>, estimate: f64) -> Self {
        Error::NumericalFailure {
            what: what.into(),
            estimate,
        }
    }
}
