use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search radius {radius} for dimension {n}")]
    InvalidRadius { radius: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("portfolio {0:?} does not contain radius 1")]
    UnsolvablePortfolio(Vec<usize>),

    #[error("policy representation error: {0}")]
    Representation(String),

    #[error("portfolio family {family} is undefined for k = {k}, n = {n}")]
    FamilyUndefined { family: String, k: usize, n: usize },

    #[error("enumeration of {count} portfolios exceeds the cap of {cap}; raise the cap or shrink k/n")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("step called on a finished episode")]
    EpisodeFinished,

    #[error("action index {index} out of range for a portfolio of size {k}")]
    InvalidAction { index: usize, k: usize },

    #[error("training diverged at step {step} (last checkpoint: {last_checkpoint:?})")]
    TrainingDiverged {
        step: u64,
        last_checkpoint: Option<PathBuf>,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
