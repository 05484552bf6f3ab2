use std::path::PathBuf;

use crate::inference::{QuestionId, WorkerId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vote references unknown worker {0}")]
    UnknownWorker(WorkerId),

    #[error("vote references unknown question {0}")]
    UnknownQuestion(QuestionId),

    #[error("question {question} has {num_choices} choices, at least 2 are required")]
    InvalidQuestion {
        question: QuestionId,
        num_choices: usize,
    },

    #[error("choice {choice} is out of range for question {question} with {num_choices} choices")]
    ChoiceOutOfRange {
        question: QuestionId,
        choice: usize,
        num_choices: usize,
    },

    #[error("worker {worker} already answered question {question}")]
    AlreadyAnswered {
        worker: WorkerId,
        question: QuestionId,
    },

    #[error("exhaustive oracle limited to {limit} candidate assignments, instance needs {needed}")]
    OracleTooLarge { needed: f64, limit: f64 },

    #[error("unknown assignment algorithm `{0}` (expected one of: {1})")]
    UnknownAlgorithm(String, String),

    /// Input files are well-formed but cannot be used together.
    #[error("unusable input data: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by files rather than by configuration.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Data(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
