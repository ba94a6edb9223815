use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no observations: both label lists are empty")]
    NoObservations,

    #[error("empty dictionary for terminal class `{0}`")]
    EmptyDictionary(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate labels: training data contains a single class")]
    DegenerateLabels,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("not enough distinct tokens: need {needed}, found {found}")]
    NotEnoughTokens { needed: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid signature pattern `{pattern}`: {reason}")]
    InvalidSignature { pattern: String, reason: String },

    #[error("nothing to emit: empty subsequence")]
    NothingToEmit,

    #[error("empty payload")]
    EmptyPayload,

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is not valid UTF-8")]
    NotUtf8 { path: PathBuf },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown format `{0}`")]
    UnknownFormat(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
