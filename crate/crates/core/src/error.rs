use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("utterance index {index} out of range for dialog of {len} utterances")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dialog `{id}` is invalid: {reason}")]
    InvalidDialog { id: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate dialog id `{0}`")]
    DuplicateId(String),

    #[error("dialog `{0}` has fewer than two question-answer pairs")]
    NotEnoughPairs(String),

    #[error("{term} loss is not finite and non-negative: {value}")]
    NonFiniteLoss { term: &'static str, value: f64 },

    #[error("backend returned no candidates for passage `{passage_id}` at turn {turn}")]
    NoCandidates { passage_id: String, turn: usize },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("`{name}` is not available: {advice}")]
    Unavailable { name: String, advice: String },

    #[error("{failed} of {total} records failed, above the 1% tolerance")]
    TooManyFailures { failed: usize, total: usize },

    #[error("training aborted at step {step}: {source}")]
    TrainingAborted {
        step: usize,
        last_good: Option<PathBuf>,
        #[source]
        source: Box<Error>,
    },

    #[error("passage `{passage_id}` referenced by dialog `{dialog_id}` is not in the corpus")]
    DanglingPassage {
        dialog_id: String,
        passage_id: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
