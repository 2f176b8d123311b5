use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid array or algorithm parameters.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A microphone or source ended up outside the room.
    #[error("placement error: {0}")]
    Placement(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("scenario sampling exhausted after {attempts} attempts: {reason}")]
    SamplingExhausted { attempts: usize, reason: String },

    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Audio format mismatch (sample rate, channel count, encoding).
    #[error("format error: {0}")]
    Format(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    /// One or more manifest entries refer to assets that do not exist.
    #[error("manifest references {} missing asset(s): {}", missing.len(), missing.join(", "))]
    Manifest { missing: Vec<String> },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("channel error: {0}")]
    Channel(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("malformed data in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("external tool failed: {0}")]
    External(String),

    /// A benchmarked processor failed; `timings` holds the completed runs.
    #[error("processor failed after {} completed repetition(s): {source}", timings.len())]
    Benchmark {
        timings: Vec<f64>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
