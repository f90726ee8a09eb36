use thiserror::Error;

use crate::time::Time;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time arithmetic overflowed the dyadic representation")]
    TimeOverflow,

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid time domain: {0}")]
    InvalidDomain(String),

    #[error("time {0} lies outside the time domain")]
    OutsideDomain(Time),

    #[error("grid is not a sub-grid of the source grid")]
    NotSubgrid,

    #[error("window does not meet the time domain")]
    EmptyWindow,

    #[error("state tuple has length {got}, grid has {expected} times")]
    Misaligned { expected: usize, got: usize },

    #[error("state {0} is not in the state space")]
    UnknownState(u32),

    #[error("invalid rate matrix at row {row}: {reason}")]
    InvalidRateMatrix { row: usize, reason: String },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("truncation window is empty")]
    EmptyTruncation,

    #[error("partition sets overlap on atom {0:?}")]
    OverlappingEvents(Vec<u32>),

    #[error("{0} is not a right-sided limit point of the time domain")]
    NotRightLimitPoint(Time),

    #[error("{0} is not a left-sided limit point of the time domain")]
    NotLeftLimitPoint(Time),

    #[error("no schedule point approaches {0} from the requested side")]
    NoApproachPoints(Time),

    #[error("window starting at {window_start} has {changes} adjacent changes, budget is {budget}")]
    JumpBudgetExceeded { window_start: i64, changes: usize, budget: usize },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("interval [{0}, {1}] is empty")]
    EmptyInterval(Time, Time),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }
}
