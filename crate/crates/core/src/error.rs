use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("point {point:?} lies outside crop at {origin:?} with extent {extent:?}")]
    OutOfCrop {
        point: [usize; 3],
        origin: [usize; 3],
        extent: [usize; 3],
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("series needs at least two points (budget >= 1), got {0}")]
    InsufficientSeries(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("no prompt type is supported by every algorithm for task `{task}`")]
    NoCommonPrompt { task: String },

    #[error("protocol version mismatch: client speaks {client}, application speaks {application}")]
    ProtocolVersion { client: u32, application: u32 },

    #[error("cannot connect to {endpoint}: {source}")]
    Connect {
        endpoint: String,
        #[source]
        source: std::io::Error,
    },

    #[error("no response within {0:.1} s")]
    InferenceTimeout(f64),

    #[error("prediction shape {returned:?} differs from native image shape {native:?}")]
    NativeSpaceViolation {
        native: [usize; 3],
        returned: [usize; 3],
    },

    #[error("application error [{code}]: {message}")]
    Application { code: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

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

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
