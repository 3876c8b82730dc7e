use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the penalty-learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: malformed row {row}: {message}")]
    Format {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("sequence `{sequence_id}` (row {row}): {message}")]
    InvalidSequence {
        sequence_id: String,
        row: usize,
        message: String,
    },

    #[error("label for unknown sequence `{0}`")]
    UnknownSequence(String),

    #[error("labels of sequence `{sequence_id}` overlap: [{first_start}, {first_end}] and [{second_start}, {second_end}]")]
    OverlappingLabels {
        sequence_id: String,
        first_start: i64,
        first_end: i64,
        second_start: i64,
        second_end: i64,
    },

    #[error("invalid label on sequence `{sequence_id}`: {message}")]
    InvalidLabel {
        sequence_id: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at iteration {iteration}: non-finite loss")]
    Training { iteration: usize },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("accuracy undefined: no labels in the evaluated sequences")]
    NoLabels,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// `true` for problems with the user's inputs (bad files, bad parameters),
    /// `false` for failures that happen while running a valid request.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Training { .. } | Error::Pipeline(_) | Error::Io { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
