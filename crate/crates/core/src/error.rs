use std::path::PathBuf;

use thiserror::Error;

use crate::label::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    InvalidRecord { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("insufficient examples for question {question_id}: label {label} has {available}, need {needed}")]
    InsufficientExamples {
        question_id: String,
        label: Label,
        available: usize,
        needed: usize,
    },

    #[error("missing rubric for question {0}")]
    MissingRubric(String),

    #[error("could not parse model output: {0}")]
    Parse(String),

    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("cache write failed for {path}: {source}")]
    CacheWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input or arguments, as opposed to
    /// transport or system failures.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidRecord { .. }
                | Error::InvalidInput(_)
                | Error::InsufficientData(_)
                | Error::InsufficientExamples { .. }
                | Error::MissingRubric(_)
                | Error::Parse(_)
                | Error::MissingApiKey(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
