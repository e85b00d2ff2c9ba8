//! Rank-addressed message passing for the benchmark suite.
//!
//! A job is a fixed set of ranks `0..size`. Ranks exchange tagged byte
//! payloads point to point (matched by exact source and tag, non-overtaking)
//! and take part in tree-based collectives built on the same primitive.
//! Two backends are interchangeable: threads of one process, or a full mesh
//! of TCP connections (one process per rank, or threads over localhost).
//!
//! Externally launched TCP ranks read their placement from
//! [`ENV_RANK`], [`ENV_SIZE`] and [`ENV_COORDINATOR`] when not given on the
//! command line.

mod communicator;
mod error;
pub mod frame;
mod inproc;
mod job;
mod mailbox;
mod tcp;
mod transport;

use std::fmt;
use std::str::FromStr;

pub use communicator::{CommCounters, Communicator, TraceEvent, TraceKind, RESERVED_TAG_BASE};
pub use error::{CommError, Result};
pub use job::{coordinator_from_env, spawn_job, JobConfig, JobError};
pub use tcp::TcpConfig;
pub use transport::AbortHandle;

/// Per (sender, receiver) pair, bytes that may be queued before `send` blocks.
pub const DEFAULT_BUFFER_CAP: usize = 64 * 1024 * 1024;

pub const ENV_RANK: &str = "MHB_RANK";
pub const ENV_SIZE: &str = "MHB_SIZE";
pub const ENV_COORDINATOR: &str = "MHB_COORDINATOR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    InProcess,
    Tcp,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(Backend::InProcess),
            "tcp" => Ok(Backend::Tcp),
            other => Err(format!("unknown backend `{other}` (expected inproc or tcp)")),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::InProcess => "inproc",
            Backend::Tcp => "tcp",
        })
    }
}
