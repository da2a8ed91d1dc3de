use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("crop box {x}..{x_end} x {y}..{y_end} lies outside the {width}x{height} image")]
    CropOutOfBounds {
        x: i64,
        y: i64,
        x_end: i64,
        y_end: i64,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at pixel ({i}, {j})")]
    NonFiniteDepth { i: usize, j: usize },

    #[error("non-positive depth {value} at pixel ({i}, {j})")]
    NonPositiveDepth { i: usize, j: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh is not watertight: {boundary_edges} boundary edges, {inconsistent_edges} inconsistently wound edges")]
    NotWatertight {
        boundary_edges: usize,
        inconsistent_edges: usize,
    },

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field returned non-finite value {value} at ({x}, {y}, {z})")]
    NonFiniteField { x: f64, y: f64, z: f64, value: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid label {0}; expected 0 or 1")]
    InvalidLabel(f64),

    #[error("postcondition violated: {0}")]
    Postcondition(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
