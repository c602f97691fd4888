use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A projected feature collapsed to (near) zero norm and cannot be normalized.
    #[error("degenerate feature: norm {norm:e} is not above {eps:e}")]
    DegenerateFeature { norm: f64, eps: f64 },

    #[error("degenerate prototype for class {class}")]
    DegeneratePrototype { class: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid label {label}: {reason}")]
    InvalidLabel { label: usize, reason: String },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("partition infeasible after {retries} retries: {reason}")]
    PartitionInfeasible { retries: usize, reason: String },

    #[error("too few samples: {n} (need at least {min})")]
    TooFewSamples { n: usize, min: usize },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("client {client} (round {round}, batch {batch}): {source}")]
    Client {
        client: usize,
        round: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format { offset, message: message.into() }
    }

    /// Process exit status: 2 config, 3 data, 4 numerical, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Format { .. }
            | Error::PartitionInfeasible { .. }
            | Error::TooFewSamples { .. }
            | Error::InvalidLabel { .. } => 3,
            Error::Dimension(_)
            | Error::DegenerateFeature { .. }
            | Error::DegeneratePrototype { .. }
            | Error::InvalidDimension(_)
            | Error::Aggregation(_)
            | Error::UndefinedMetric(_) => 4,
            Error::Client { source, .. } => source.exit_code(),
            Error::Io { .. } => 5,
        }
    }
}
