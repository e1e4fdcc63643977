use thiserror::Error;

/// Errors raised by estimation, inference and data handling.
#[derive(Debug, Error)]
pub enum ConquerError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("non-finite gradient at solver iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<ConquerError>,
    },
    #[error("shard {shard}: {source}")]
    Shard {
        shard: usize,
        #[source]
        source: Box<ConquerError>,
    },
    #[error("no convergence after {iterations} iterations ({context})")]
    NotConverged { iterations: usize, context: &'static str },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("stale gradient from shard {shard}: version {got}, expected {expected}")]
    StaleGradient {
        shard: usize,
        got: u64,
        expected: u64,
    },
    #[error("non-positive standard error for coefficient {coef} ({kind})")]
    NonPositiveVariance { coef: usize, kind: String },
    #[error("degenerate score statistic: V = 0 with S = {s}")]
    DegenerateScore { s: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl ConquerError {
    pub(crate) fn in_round(self, round: usize) -> Self {
        ConquerError::Round {
            round,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_shard(self, shard: usize) -> Self {
        ConquerError::Shard {
            shard,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, ConquerError>;
