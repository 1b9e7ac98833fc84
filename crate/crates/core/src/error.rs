use thiserror::Error;

/// Errors produced by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid process specification: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("generalized variance has no unique minimizer: {0}")]
    Ambiguity(String),

    #[error("circulant embedding failed: min eigenvalue {min_eigen:e} vs max {max_eigen:e}")]
    EmbeddingFailure { min_eigen: f64, max_eigen: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence after {} rungs (last values {:?})", .sequence.len(), .sequence)]
    Convergence { sequence: Vec<(f64, f64, f64)> },

    #[error("constant provider: {0}")]
    Provider(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
