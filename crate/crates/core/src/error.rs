use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure at t = {t}: {what}")]
    NumericalFailure { t: usize, what: String },

    #[error("cluster {cluster} has no observation with weight above the truncation threshold")]
    EmptyCluster { cluster: usize },

    #[error("membership posterior of series {series} is degenerate (all terms are zero)")]
    DegeneratePosterior { series: usize },

    #[error("internal consistency: {what} decreased by {decrease:e}")]
    InternalConsistency { what: String, decrease: f64 },

    #[error("initialization failed for series {series}: {reason}")]
    Initialization { series: String, reason: String },

    #[error("data error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(t: usize, what: impl Into<String>) -> Self {
        Error::NumericalFailure {
            t,
            what: what.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 3,
            Error::InvalidInput(_) => 2,
            Error::NumericalFailure { .. }
            | Error::EmptyCluster { .. }
            | Error::DegeneratePosterior { .. }
            | Error::InternalConsistency { .. }
            | Error::Initialization { .. } => 4,
        }
    }
}
