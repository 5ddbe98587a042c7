use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("tensor of shape {shape:?} needs {expected} values, got {got}")]
    BadTensorData {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("backward requires a scalar output, node has shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("node {0} does not belong to this graph")]
    UnknownNode(usize),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid value for `{key}`: got {got}, expected {expected}")]
    InvalidValue {
        key: String,
        got: String,
        expected: String,
    },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    EmptyPlan(&'static str),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(key: &str, got: impl ToString, expected: &str) -> Self {
        Error::InvalidValue {
            key: key.to_string(),
            got: got.to_string(),
            expected: expected.to_string(),
        }
    }
}
