use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({details})")]
    ShapeMismatch { op: &'static str, details: String },

    #[error("{op}: invalid argument ({details})")]
    InvalidArgument { op: &'static str, details: String },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("{op}: degenerate input ({details})")]
    DegenerateInput { op: &'static str, details: String },

    #[error("invalid DNA base {found:?} at position {position}")]
    InvalidBase { found: char, position: usize },

    #[error("cannot decode one-hot column {column}: {details}")]
    InvalidColumn { column: usize, details: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {details}")]
    Parse {
        path: PathBuf,
        line: usize,
        details: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("checkpoint: {details}")]
    Checkpoint { details: String },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
}

impl Error {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            details: details.into(),
        }
    }

    pub fn arg(op: &'static str, details: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            details: details.into(),
        }
    }

    pub fn degenerate(op: &'static str, details: impl Into<String>) -> Self {
        Error::DegenerateInput {
            op,
            details: details.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
