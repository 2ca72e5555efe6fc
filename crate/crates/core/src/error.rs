use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The transition network produced NaN or infinite logits; the rule should be discarded.
    #[error("rule {rule_seed:#018x} produced non-finite logits")]
    NonFiniteLogits { rule_seed: u64 },

    #[error(
        "sequence {sequence_index}: no rule landed in the complexity band after {attempts} attempts (last ratio: {})",
        last_ratio.map(|r| format!("{r:.2}%")).unwrap_or_else(|| "none".into())
    )]
    RetriesExhausted {
        sequence_index: u64,
        attempts: u32,
        last_ratio: Option<f64>,
    },

    #[error("cell value {value} outside alphabet of size {alphabet}")]
    InvalidCell { value: u32, alphabet: usize },

    #[error("token id {id} outside vocabulary of size {vocab}")]
    InvalidToken { id: u32, vocab: u64 },

    #[error("malformed token sequence at offset {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("curve log line {line}: {reason}")]
    CurveLog { line: usize, reason: String },

    #[error("corrupt shard: {0}")]
    CorruptShard(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: u64, len: u64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Process exit code for the command-line surface.
    ///
    /// 2 configuration error, 3 retries exhausted, 4 I/O error, 5 corrupt shard or input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidCell { .. }
            | Error::InvalidToken { .. }
            | Error::IndexOutOfRange { .. }
            | Error::UndefinedMetric(_) => 2,
            Error::RetriesExhausted { .. } | Error::NonFiniteLogits { .. } => 3,
            Error::Io(_) => 4,
            Error::CorruptShard(_) | Error::Parse { .. } | Error::CurveLog { .. } | Error::Json(_) => 5,
        }
    }
}
