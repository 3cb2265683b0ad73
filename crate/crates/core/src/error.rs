use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty vector")]
    Empty,

    #[error("phase {value} outside [0, 2pi]")]
    PhaseOutOfRange { value: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid coalition {0}")]
    InvalidCoalition(String),

    #[error("c1 + c2 must equal 1 (got c1={c1}, c2={c2})")]
    CoalitionIndicator { c1: u8, c2: u8 },

    #[error("missing utility for {player} in {coalition}")]
    MissingUtility { player: String, coalition: String },

    #[error("malformed move: {0}")]
    MalformedMove(String),

    #[error("switch dynamics did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("missing action fragment for coalition {0}")]
    MissingFragment(String),

    #[error("non-finite gradient in {context}")]
    NonFiniteGradient { context: String },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error at {path}: {message}")]
    Serialization { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn ser(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Serialization {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
