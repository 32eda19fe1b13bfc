use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator and training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid count: {0}")]
    InvalidCount(&'static str),

    #[error("infeasible channel: uplink rate {rate} must be positive")]
    InfeasibleChannel { rate: f64 },

    #[error("infeasible node: {0}")]
    InfeasibleNode(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("sequencing error: {0}")]
    Sequencing(&'static str),

    #[error("no feasible action under the current mask")]
    NoFeasibleAction,

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("incompatible format: expected `{expected}`, found `{found}`")]
    Incompatible { expected: String, found: String },

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
