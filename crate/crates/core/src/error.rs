use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no carrier found (peak-to-floor ratio {ratio_db:.1} dB)")]
    NoCarrier { ratio_db: f64 },
    #[error("phase lock failed (correlation {correlation:.4} below threshold {threshold:.4})")]
    PhaseLockFailed { correlation: f64, threshold: f64 },
    #[error("singular normal matrix in least-squares fit")]
    SingularFit,
    #[error("nonphysical covariance (discriminant {0:e})")]
    NonphysicalCovariance(f64),
    #[error("unstable filter coefficients")]
    UnstableFilter,
    #[error("too many excluded pulses: {excluded} of {total}")]
    TooManyExcluded { excluded: usize, total: usize },
    #[error("stage order violation: {from:?} -> {to:?}")]
    StageOrder {
        from: crate::model::Stage,
        to: crate::model::Stage,
    },
    #[error("trace file: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
