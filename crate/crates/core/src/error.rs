use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// How a judge reply failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MalformedReply {
    LengthMismatch { expected: usize, got: usize },
    NonNumeric,
    OutOfRange(String),
}

impl std::fmt::Display for MalformedReply {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MalformedReply::LengthMismatch { expected, got } => {
                write!(f, "length-mismatch: expected {expected} entries, got {got}")
            }
            MalformedReply::NonNumeric => write!(f, "non-numeric entry"),
            MalformedReply::OutOfRange(detail) => write!(f, "out-of-range: {detail}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },

    #[error("agent {agent}: script exhausted")]
    ScriptExhausted { agent: usize },

    #[error("topology: {0}")]
    Topology(String),

    #[error("no outputs to aggregate")]
    NoOutputs,

    #[error("similarity ensemble needs at least two outputs")]
    TooFewOutputs,

    #[error("no credibility entry for agent {agent}")]
    MissingCrs { agent: usize },

    #[error("no contribution entry for agent {agent}")]
    MissingContribution { agent: usize },

    #[error("no output from agent {agent}")]
    MissingAgent { agent: usize },

    #[error("team of {n} agents exceeds the exact-Shapley bound of {max}")]
    TeamTooLarge { n: usize, max: usize },

    #[error("malformed judge reply: {0}")]
    MalformedJudgeReply(MalformedReply),

    #[error("judge unavailable: {0}")]
    JudgeUnavailable(String),

    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),

    #[error("malformed remote response: {0}")]
    MalformedResponse(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("replay divergence at round {round} ({field}): {detail}")]
    ReplayDivergence {
        round: usize,
        field: String,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_field(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field,
            reason: reason.into(),
        }
    }

    /// Name of the offending config field, when this is a validation error.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::InvalidField { field, .. } => Some(field),
            _ => None,
        }
    }
}
