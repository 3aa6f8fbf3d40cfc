use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("eigensolver did not converge (residual {residual:e})")]
    EigenNonConvergence { residual: f64 },

    #[error("system is not stable: max spectral norm {rho} >= 1")]
    Unstable { rho: f64 },

    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("duplicate observation for station {station} on {date}")]
    DuplicateObservation { station: String, date: String },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
