use thiserror::Error;

/// Errors raised by the simulator and the certificate machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A collision-frequency model or σ value violates `σ > 0`.
    #[error("invalid collision-frequency model: {0}")]
    InvalidModel(String),

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A decay certificate cannot be built or an α is not admissible.
    #[error("certificate error: {0}")]
    Certificate(String),

    /// Taylor bound does not exist for the model family.
    #[error("model is not certifiable: {0}")]
    NotCertifiable(String),

    /// Initial data violate a requirement (e.g. normalization).
    #[error("data error: {0}")]
    Data(String),

    /// Caller passed inconsistent arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// A numerical kernel failed (non-finite exponential, eigensolver divergence).
    #[error("numeric failure{}: {msg}", .k.map(|k| format!(" at mode k={k}")).unwrap_or_default())]
    Numeric { k: Option<i64>, msg: String },

    /// An invariant that should be unreachable for valid inputs.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn numeric(k: Option<i64>, msg: impl Into<String>) -> Self {
        Error::Numeric { k, msg: msg.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
