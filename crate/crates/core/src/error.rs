use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the laboratory can report. Variants map one-to-one onto
/// [`ErrorKind`], which the CLI and the C ABI turn into exit/status codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("state error: {0}")]
    State(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Shape,
    Config,
    Domain,
    Contract,
    State,
    Training,
    Usage,
    Format,
    Mismatch,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Shape(_) => ErrorKind::Shape,
            Error::Config(_) => ErrorKind::Config,
            Error::Domain(_) => ErrorKind::Domain,
            Error::Contract(_) => ErrorKind::Contract,
            Error::State(_) => ErrorKind::State,
            Error::Training(_) => ErrorKind::Training,
            Error::Usage(_) => ErrorKind::Usage,
            Error::Format { .. } => ErrorKind::Format,
            Error::Mismatch(_) => ErrorKind::Mismatch,
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl ErrorKind {
    /// Process exit code used by the `clseg` binary.
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Config => 3,
            ErrorKind::Io => 4,
            ErrorKind::Format => 5,
            ErrorKind::Shape | ErrorKind::Domain => 6,
            ErrorKind::Contract | ErrorKind::State => 7,
            ErrorKind::Training => 8,
            ErrorKind::Mismatch => 9,
        }
    }
}
