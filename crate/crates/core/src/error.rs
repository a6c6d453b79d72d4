use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model shape: {0}")]
    InvalidShape(String),

    #[error("invalid parameter {name}{index}: {reason}")]
    InvalidParams {
        name: &'static str,
        index: String,
        reason: String,
    },

    #[error("invalid event stream: {0}")]
    InvalidEvents(String),

    #[error("invalid state trajectory: {0}")]
    InvalidState(String),

    #[error("duplicate timestamp {time} at event {index}; deduplicate before estimation")]
    DuplicateTimestamp { index: usize, time: f64 },

    #[error("horizon mismatch: events cover [0, {events}] but state covers [0, {state}]")]
    HorizonMismatch { events: f64, state: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time {time} outside [0, {horizon}]")]
    TimeOutOfRange { time: f64, horizon: f64 },

    #[error("negative lag {0} passed to a kernel")]
    NegativeLag(f64),

    #[error("event cap of {cap} exceeded at t = {time}")]
    EventCapExceeded { cap: usize, time: f64 },

    #[error("brute-force evaluation limited to {cap} events, got {count}")]
    OracleCapExceeded { cap: usize, count: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("missing covariate: {0}")]
    MissingCovariate(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
