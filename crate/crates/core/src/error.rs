use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    /// Caller violated an API contract (shape or length mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Prior or constraint system could not be built.
    #[error("construction error: {0}")]
    Construction(String),

    #[error("initialization error: {0}")]
    Init(String),

    /// Unrecoverable numerical failure inside a chain.
    #[error("numeric failure at iteration {iteration}: {reason}")]
    Numeric { iteration: usize, reason: String },

    /// Bad input data (CSV schema, constant columns, missing classes).
    #[error("data error: {0}")]
    Data(String),

    /// Malformed manifest or command-line usage.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Contract(_) => 1,
            Error::Data(_) | Error::ModelFormat(_) | Error::Io { .. } | Error::Init(_) => 2,
            Error::Domain(_)
            | Error::Factorization { .. }
            | Error::Construction(_)
            | Error::Numeric { .. } => 3,
        }
    }
}
