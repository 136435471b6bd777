use thiserror::Error;

use crate::stability::DivergenceTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("division by zero at index {index}")]
    DivisionByZero { index: usize },

    #[error("non-finite value in {context}{}", coordinate_suffix(*.coordinate))]
    NonFinite {
        context: &'static str,
        coordinate: Option<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid hyperparameter `{field}`: {reason}")]
    InvalidHyperParams { field: &'static str, reason: String },

    #[error("optimizer kind {kind} incompatible with hyperparameters: {reason}")]
    KindMismatch { kind: String, reason: String },

    #[error("unknown {what} `{name}` (valid: {})", valid.join(", "))]
    UnknownName {
        what: &'static str,
        name: String,
        valid: Vec<String>,
    },

    #[error("twin run diverged to a non-finite state at step {step}")]
    TwinBlowUp {
        step: u64,
        trace: Box<DivergenceTrace>,
    },

    #[error("training diverged to a non-finite state at step {step}")]
    TrainBlowUp { step: u64 },

    #[error("recursion overflowed f64 range at step {step}")]
    RecursionOverflow { step: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn coordinate_suffix(coordinate: Option<usize>) -> String {
    match coordinate {
        Some(j) => format!(" (coordinate {j})"),
        None => String::new(),
    }
}
