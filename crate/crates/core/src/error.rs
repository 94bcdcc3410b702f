use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid class set: {0}")]
    ClassSet(String),

    #[error("{path}:{line}: {msg}")]
    Ingest { path: PathBuf, line: u64, msg: String },

    #[error("duplicate rating by rater `{rater}` on utterance `{utterance}` (line {line})")]
    DuplicateRating {
        utterance: String,
        rater: String,
        line: u64,
    },

    #[error("duplicate utterance id `{0}`")]
    DuplicateUtterance(String),

    #[error("utterance has no in-set votes")]
    EmptyVotes,

    #[error("unknown dataset `{given}` (supported: {supported})")]
    UnknownDataset { given: String, supported: String },

    #[error("unknown rater `{0}`")]
    UnknownRater(String),

    #[error("class `{0}` never received a vote; co-occurrence weights are undefined")]
    AbsentClass(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Whether the error stems from bad user input rather than a fault in the
    /// toolkit. The CLI maps this onto its exit code.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::ReplayMismatch(_))
    }
}
