use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {} violation(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidMdp(Vec<Violation>),

    #[error("malformed MDP structure: {0}")]
    Structure(String),

    #[error("state {0} appears more than once in the sweep order")]
    DuplicateState(usize),

    #[error("state index {index} out of range for {n_states} states")]
    StateOutOfRange { index: usize, n_states: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("linear system is singular (pivot below tolerance)")]
    SingularSystem,

    #[error("grid line {line}, column {column}: {message}")]
    GridParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("goal sets do not match")]
    GoalMismatch,

    #[error("heatmaps require a grid-backed MDP")]
    NotAGrid,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
