use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid query graph: {0}")]
    InvalidGraph(String),

    #[error("cannot classify topology: {0}")]
    Classification(String),

    #[error("sampling exhausted: {0}")]
    SamplingExhausted(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("unsupported arity {0} (only k = 2 has a closed-form joint rank)")]
    UnsupportedArity(usize),

    #[error("execution error: {0}")]
    Execution(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
