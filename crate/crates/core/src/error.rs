use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("length mismatch: expected {expected} values, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("unsupported dtype `{0}`")]
    UnsupportedDtype(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("label {0} is outside the class range 0..14")]
    InvalidLabel(u32),

    #[error("label {0} has no palette entry")]
    MissingColor(u8),

    #[error("sample at ({row}, {col}) is too close to the raster edge for an 11x11 patch")]
    OutOfMargin { row: usize, col: usize },

    #[error("class {class} has {count} samples, at least {min} required")]
    TooFewSamples { class: u8, count: usize, min: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad model file: {0}")]
    BadModel(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}
