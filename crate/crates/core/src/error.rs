use std::path::PathBuf;

use thiserror::Error;

use crate::ipf::NonConvergence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty data: count table has no records")]
    EmptyData,

    #[error("infeasible constraint system: {0}")]
    Infeasible(String),

    #[error("ill-posed reference: {0}")]
    IllPosedReference(String),

    #[error("{0}")]
    NonConvergence(Box<NonConvergence>),

    #[error("support violation: {0}")]
    Support(String),

    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Argument(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Ingest { .. } | Error::EmptyData | Error::Csv(_) => 3,
            Error::NonConvergence(_)
            | Error::Infeasible(_)
            | Error::IllPosedReference(_)
            | Error::Support(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}
