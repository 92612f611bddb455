use alloc::string::String;

/// Errors produced by the statistical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("current-round amount must be positive, got {0}")]
    NonPositiveAmount(f64),
    #[error("next-round amount must be non-negative, got {0}")]
    NegativeAmount(f64),
    #[error("next-round amount present without months_to_next_round")]
    MissingMonths,
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("negative multiple {0}")]
    NegativeMultiple(f64),
    #[error("empty sample: {0}")]
    EmptySample(&'static str),
    #[error("no deals available for stratum {0}")]
    EmptyStratum(String),
    #[error("rank {k} out of range 1..={n}")]
    RankOutOfRange { k: usize, n: usize },
    #[error("expected {expected} observations, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("sample has no positive values")]
    NoPositiveValues,
    #[error("bin edges must be strictly increasing and positive")]
    InvalidBinEdges,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
