use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid instance: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    /// A problem exceeds a configured size cap. Exact solvers fail fast
    /// instead of exhausting memory.
    #[error("{what} has size {size}, above the cap of {cap}")]
    Size {
        what: &'static str,
        size: u128,
        cap: u128,
    },

    #[error("cost of worker {worker} on arm {arm} is {value}, but an integer cost is required")]
    NonIntegerCost { arm: usize, worker: usize, value: f64 },

    #[error("invalid domain spec: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_size(&self) -> bool {
        matches!(self, Error::Size { .. })
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return Error::Io(e.into());
        }
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
