use std::path::PathBuf;

use mhb_comm::{CommError, JobError};
use mhb_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Job(#[from] JobError),
    /// A benchmark produced a wrong answer; its timings are meaningless.
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Stats(#[from] crate::harness::StatsError),
    #[error("trial {index} of {total} failed with {recorded} samples recorded: {message}")]
    Trial {
        index: usize,
        total: usize,
        recorded: usize,
        message: String,
    },
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
