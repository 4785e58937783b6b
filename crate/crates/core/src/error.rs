use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration point: {}", join_violations(.0))]
    InvalidPoint(Vec<Violation>),

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("no examples match subdomain {0}")]
    EmptySubdomain(String),

    #[error("feature width mismatch: model expects {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("search space has {size} points, above the exhaustive cap of {cap}; use simulated annealing")]
    SpaceTooLarge { size: u128, cap: u128 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("harness configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Backend(#[from] crate::harness::BackendFailure),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
