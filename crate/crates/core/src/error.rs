use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed profile file {path} at line {line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("profile length mismatch: expected {expected} values, found {found}")]
    ProfileLength { expected: usize, found: usize },

    #[error("trace length mismatch: expected {expected} values, found {found}")]
    TraceLength { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state of charge for unit {unit}: {soc} not in [0, {cap}]")]
    InvalidSoc { unit: usize, soc: f64, cap: f64 },

    #[error("margin trace contains NaN at hour {0}")]
    NanMargin(usize),

    #[error("brute-force search too large: {0} state transitions")]
    SearchTooLarge(u128),

    #[error("cannot fit a forest on an empty dataset")]
    EmptyDataset,

    #[error("forest format error: {0}")]
    Format(String),

    #[error("at least {needed} samples are required to estimate a variance, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("model produced a non-finite output at level {level}")]
    NonFinite { level: usize },

    #[error("simulation budget {budget} s cannot cover the minimum of {needed} s")]
    BudgetTooSmall { budget: f64, needed: f64 },

    #[error("estimator variance is zero; speed is unbounded")]
    ZeroVariance,

    #[error("total time {t} s is below the training time {t_train} s")]
    TimeBelowTraining { t: f64, t_train: f64 },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
