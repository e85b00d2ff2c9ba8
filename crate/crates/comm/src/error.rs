use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommError {
    #[error("rank {rank} out of range for communicator of size {size}")]
    RankOutOfRange { rank: usize, size: usize },

    #[error("tag {0:#x} is reserved for internal use")]
    ReservedTag(u32),

    #[error("job torn down: {0}")]
    Aborted(String),

    #[error("rank {source_rank} disconnected with no pending message for tag {tag}")]
    Disconnected { source_rank: usize, tag: u32 },

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("timed out after {0:?} waiting for peers")]
    Timeout(std::time::Duration),

    #[error("payload of {len} bytes cannot be decoded as {what}")]
    Decode { len: usize, what: &'static str },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = CommError> = std::result::Result<T, E>;
