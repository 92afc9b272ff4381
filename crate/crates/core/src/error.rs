use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed map: {0}")]
    MalformedMap(String),

    #[error("unbounded map: border cell (row {row}, col {col}) is not occupied")]
    UnboundedMap { row: usize, col: usize },

    #[error("robot {robot}: start pose ({x:.3}, {y:.3}) is not on a free cell")]
    InvalidStartPose { robot: usize, x: f64, y: f64 },

    #[error("soft threshold {soft} must not exceed hard threshold {hard} (and both must lie in (0, 1])")]
    ThresholdOrder { soft: f64, hard: f64 },

    #[error("bad noise configuration: {0}")]
    BadNoise(String),

    #[error("invalid scenario: {0}")]
    InvalidConfig(String),

    #[error("cannot parse scenario: {0}")]
    ConfigParse(String),

    #[error("pose ({x:.3}, {y:.3}) lies in an occupied or out-of-bounds cell")]
    PoseInOccupied { x: f64, y: f64 },

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("track for robot {target} is inactive")]
    InactiveTrack { target: usize },

    #[error("map shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("no input to summarize")]
    EmptyInput,

    #[error("trial {index} failed: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
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
}
