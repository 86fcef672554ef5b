use thiserror::Error;

/// Errors produced while validating, scoring, simulating or reading traces.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed trace: {0}")]
    Malformed(String),

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("empty hypothesis: no tokens to score")]
    EmptyHypothesis,

    #[error("no scorable instances in corpus")]
    NoScorableInstances,

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid compute model: {0}")]
    InvalidCompute(String),

    #[error("line {line}: parse error: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: schema error: {reason}")]
    Schema { line: usize, reason: String },

    #[error("i/o error{}: {reason}", instance.as_ref().map(|id| format!(" (instance {id})")).unwrap_or_default())]
    Io {
        instance: Option<String>,
        reason: String,
    },
}

impl Error {
    pub(crate) fn malformed(reason: impl Into<String>) -> Self {
        Error::Malformed(reason.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io {
            instance: None,
            reason: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
