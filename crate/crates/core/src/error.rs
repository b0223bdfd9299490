use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite logits in {head} head; parameters have blown up")]
    NonFiniteLogits { head: &'static str },

    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),

    #[error("empty rollout batch")]
    EmptyBatch,

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: unknown {field} category {value:?}")]
    UnknownCategory {
        line: usize,
        field: &'static str,
        value: String,
    },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("line {line}: text {text:?} is empty after normalization")]
    EmptyText { line: usize, text: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
