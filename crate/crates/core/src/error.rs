use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An algorithm or bound parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Param(String),
    /// Caller-supplied data (arm ids, rewards, means) violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// An operation was called on state that cannot support it.
    #[error("invalid state: {0}")]
    State(String),
    /// A means file could not be ingested.
    #[error("{path}:{line}: {message}")]
    Ingest {
        path: String,
        line: usize,
        message: String,
    },
    /// The synthetic generator could not place a certified outlier group.
    #[error("generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
