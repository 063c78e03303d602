use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input that parses but violates the documented schema. `pointer` is
    /// an RFC 6901 JSON pointer into the offending document.
    #[error("{}: schema error at '{pointer}': {message}", file.display())]
    Schema {
        file: PathBuf,
        pointer: String,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] panoroom_core::Error),
    /// A self-check ran and did not pass.
    #[error("check failed: {0}")]
    Check(String),
}

impl Error {
    pub fn schema(file: impl Into<PathBuf>, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for schema errors, 3 for failed checks, 1
    /// otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } => 2,
            Error::Check(_) => 3,
            _ => 1,
        }
    }
}
