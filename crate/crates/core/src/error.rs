use thiserror::Error;

use crate::model::{MessageId, OperatorId, Violation};

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown operator {0}")]
    UnknownOperator(OperatorId),

    #[error("no cost given for operator {0}")]
    MissingCost(OperatorId),

    #[error("latency needs at least one influencing event")]
    EmptyEventSet,

    #[error("output emitted at {emit} ms precedes last input arrival at {last_arrival} ms")]
    NegativeLatency { emit: i64, last_arrival: i64 },

    #[error("slide size must be positive, got {0}")]
    NonpositiveSlide(i64),

    #[error("progress model has fewer than two distinct samples")]
    UnfitModel,

    #[error("message {0} carries no priority context")]
    MissingContext(MessageId),

    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("invalid graph for job {job}: {violations:?}")]
    InvalidGraph { job: String, violations: Vec<Violation> },

    #[error("duplicate job id {0}")]
    DuplicateJob(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("calibration target unreachable: {0}")]
    CalibrationUnreachable(String),

    #[error("invalid sweep axis or value: {0}")]
    InvalidSweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
