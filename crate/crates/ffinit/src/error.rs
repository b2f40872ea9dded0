use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing dataset: {0}")]
    MissingDataset(String),

    #[error(transparent)]
    Core(#[from] ffinit_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// I/O and file-format problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(ffinit_core::Error::Config(_)) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::MissingDataset(_) | Error::Csv(_) => 3,
            Error::Core(_) => 1,
        }
    }
}
