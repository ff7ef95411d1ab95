use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("proto-goal index {index} out of range for vector of length {len}")]
    RegistryMismatch { index: usize, len: usize },

    #[error("cannot combine a goal with itself (mask {0:?})")]
    SelfCombination(Vec<usize>),

    #[error("goal mask must be non-empty")]
    EmptyMask,

    #[error("timescale discount must lie in (0, 1), got {0}")]
    InvalidTimescale(f64),

    #[error("environment episode is over; call reset first")]
    StepAfterDone,

    #[error("invalid action {action} (environment has {n_actions} actions)")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("observation has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no value estimate for proto-goal {0}")]
    UnknownGoal(usize),

    #[error("no plausible goals yet")]
    EmptyGoalSpace,

    #[error("label sets differ: {predicted} predicted vs {truth} ground-truth labels")]
    LabelMismatch { predicted: usize, truth: usize },

    #[error("environment `{0}` has no controllability ground truth")]
    NotAProbe(String),

    #[error("invalid configuration: {0}")]
    Config(String),

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
        Error::Io { path: path.into(), source }
    }
}
