use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate contour: {0}")]
    DegenerateContour(String),

    #[error("insufficient samples: 2N = {rows} must exceed feature dimension p = {features}")]
    InsufficientSamples { rows: usize, features: usize },

    #[error("singular regression: {0}")]
    SingularRegression(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("gripper position ({x:.3}, {y:.3}) is unreachable (distance {distance:.3} > rod length {length:.3})")]
    Unreachable {
        x: f64,
        y: f64,
        distance: f64,
        length: f64,
    },

    #[error("equilibrium solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("covariance decomposition failed: {0}")]
    DecompositionFailure(String),

    #[error("non-finite command input")]
    NonFiniteCommand,

    #[error("centerline chain broken at output index {index}: no remaining point within box_size {box_size} of ({x:.2}, {y:.2})")]
    BrokenChain {
        index: usize,
        box_size: f64,
        x: f64,
        y: f64,
    },

    #[error("run diverged at tick {tick}: T1 = {t1:.3} exceeds {limit:.3}")]
    RunDiverged { tick: usize, t1: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
