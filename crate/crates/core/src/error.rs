use thiserror::Error;

use crate::trace::ProgressTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design point duplicates an existing input (index {index})")]
    DuplicateInput { index: usize },

    #[error("point {x:?} lies outside the bounding box")]
    OutOfBounds { x: Vec<f64> },

    /// Cholesky factorization failed even after the maximum jitter.
    #[error("covariance matrix is ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("blackbox returned non-finite output at x = {x:?}: {values:?}")]
    NonFinite { x: Vec<f64>, values: Vec<f64> },

    #[error("blackbox protocol failure: {message} (raw child output: {raw:?})")]
    Protocol { message: String, raw: String },

    /// A run failed part way; the rows evaluated so far are kept.
    #[error("run aborted after {} evaluations: {source}", trace.len())]
    Aborted {
        trace: Box<ProgressTrace>,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Protocol { .. } | Error::NonFinite { .. } => 2,
            Error::IllConditioned(_) => 3,
            Error::Aborted { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
