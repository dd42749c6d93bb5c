use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("transmitter and receiver are coincident")]
    CoincidentNodes,

    #[error("MAP {0} is not active")]
    InactiveMap(usize),

    #[error("observation shape does not match policy architecture: {0}")]
    ShapeMismatch(String),

    #[error("weight vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no policy registered for {0}")]
    MissingPolicy(String),

    #[error("corrupt checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("training diverged at step {step} (checkpoint written to {checkpoint})")]
    Divergence { step: u64, checkpoint: PathBuf },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("record set is empty")]
    EmptyRecords,

    #[error("plot rendering failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidScenario(_) => 2,
            Error::Io(_) | Error::Json(_) => 3,
            Error::Checkpoint { .. } | Error::MissingPolicy(_) => 4,
            Error::Divergence { .. } => 5,
            Error::EmptyRecords | Error::Plot(_) => 6,
            _ => 1,
        }
    }
}
