use std::net::SocketAddr;

use mhb_comm::{spawn_job, Backend, Communicator, JobConfig, TcpConfig};

use crate::error::{BenchError, Result};

/// How the ranks of a benchmark job come to exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Launch {
    /// All ranks as threads of this process.
    Local(Backend),
    /// This process is one rank of a TCP job started elsewhere.
    External { rank: usize, size: usize, coordinator: SocketAddr },
}

impl Launch {
    pub fn backend(&self) -> Backend {
        match self {
            Launch::Local(b) => *b,
            Launch::External { .. } => Backend::Tcp,
        }
    }
}

/// Runs `entry` on every rank of a job of `size` ranks and returns the first
/// `Some` result (by convention, rank 0's). Externally launched ranks other
/// than 0 get `None`.
pub fn run_job<T, F>(size: usize, launch: &Launch, entry: F) -> Result<Option<T>>
where
    T: Send,
    F: Fn(&Communicator) -> Result<Option<T>> + Sync,
{
    match launch {
        Launch::Local(backend) => {
            let results = spawn_job(&JobConfig::new(size, *backend), |comm| entry(&comm))?;
            Ok(results.into_iter().flatten().next())
        }
        Launch::External { rank, size: world, coordinator } => {
            if *world != size {
                return Err(BenchError::Config(format!(
                    "job needs {size} ranks but this process belongs to a job of {world}"
                )));
            }
            let comm = Communicator::connect_tcp(&TcpConfig::new(*rank, *world, *coordinator))?;
            entry(&comm)
        }
    }
}
