use std::path::PathBuf;

use thiserror::Error;

use crate::train::EpochMetrics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("mask has no observed entries; masked loss is undefined")]
    EmptyMask,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("architecture string, token {position}: {message}")]
    Architecture { position: usize, message: String },

    #[error("unknown user {0}")]
    UnknownUser(String),

    #[error("split: {0}")]
    Split(String),

    #[error("checkpoint {}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<memory>".into()))]
    Checkpoint { path: Option<PathBuf>, message: String },

    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged {
        epoch: usize,
        step: usize,
        reason: String,
        /// Metrics of every epoch completed before the abort.
        history: Vec<EpochMetrics>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn checkpoint(message: impl Into<String>) -> Self {
        Error::Checkpoint {
            path: None,
            message: message.into(),
        }
    }
}
