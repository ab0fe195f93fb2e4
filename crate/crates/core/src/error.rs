use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input data is malformed or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// A malformed record in a file, with its 1-based row number.
    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("design matrix is rank deficient: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    /// The optimizer or a downstream numerical routine could not produce a result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 1,
            Error::Numerical(_) | Error::RankDeficient { .. } => 3,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::MissingFile(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 2,
        }
    }
}
