use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension too small: d = {d} but at least {required} is needed")]
    DimensionTooSmall { d: usize, required: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("log exhausted: arm {arm} has {available} samples, pull {requested} requested")]
    LogExhausted {
        arm: usize,
        available: usize,
        requested: usize,
    },

    #[error("arm counts must be positive (arm {arm} has zero pulls)")]
    ZeroCount { arm: usize },

    #[error("UCB score undefined for N = {n}, t = {t}")]
    ScoreDomain { n: usize, t: usize },

    #[error("empty data")]
    EmptyData,

    #[error("rank deficient system: condition number {condition:e} exceeds {limit:e}")]
    RankDeficient { condition: f64, limit: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
