use thiserror::Error;

/// Errors returned by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency '{0}'")]
    InvalidFrequency(String),
    #[error("timestamp out of calendar range at index {0}")]
    CalendarOverflow(usize),
    #[error("invalid series '{id}': {reason}")]
    InvalidSeries { id: String, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty context")]
    EmptyContext,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("quantile level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("non-finite activations in {0}")]
    NonFinite(&'static str),
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no training instances: every series is shorter than context length + 1")]
    NoTrainingData,
    #[error("series '{id}' is too short: {reason}")]
    InsufficientLength { id: String, reason: String },
    #[error("forecast of series '{series}' failed at path {path}, step {step}: {source}")]
    Forecast {
        series: String,
        path: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("every tuning candidate failed")]
    AllCandidatesFailed,
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
