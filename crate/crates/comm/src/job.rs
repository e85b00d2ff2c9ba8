use std::fmt::Display;
use std::net::{Ipv4Addr, SocketAddr, TcpListener};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::communicator::Communicator;
use crate::error::CommError;
use crate::tcp::TcpConfig;
use crate::transport::AbortHandle;
use crate::{Backend, DEFAULT_BUFFER_CAP};

#[derive(Debug, Error)]
pub enum JobError {
    #[error("rank {rank} panicked: {message}")]
    Panicked { rank: usize, message: String },

    #[error("rank {rank} failed: {message}")]
    Failed { rank: usize, message: String },

    #[error("rank {rank} could not connect: {source}")]
    Setup {
        rank: usize,
        #[source]
        source: CommError,
    },

    #[error("job size must be at least 1")]
    EmptyJob,
}

impl JobError {
    pub fn rank(&self) -> Option<usize> {
        match self {
            JobError::Panicked { rank, .. }
            | JobError::Failed { rank, .. }
            | JobError::Setup { rank, .. } => Some(*rank),
            JobError::EmptyJob => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JobConfig {
    pub size: usize,
    pub backend: Backend,
    pub buffer_cap: usize,
    pub connect_timeout: Duration,
}

impl JobConfig {
    pub fn new(size: usize, backend: Backend) -> Self {
        JobConfig {
            size,
            backend,
            buffer_cap: DEFAULT_BUFFER_CAP,
            connect_timeout: Duration::from_secs(30),
        }
    }

    pub fn with_buffer_cap(mut self, cap: usize) -> Self {
        self.buffer_cap = cap;
        self
    }
}

struct Failure {
    order: usize,
    /// The rank failed after observing another rank's teardown.
    secondary: bool,
    error: JobError,
}

/// Shared teardown state: once any rank fails, every endpoint (including
/// ones that finish connecting later) is aborted.
struct Teardown {
    handles: Mutex<(Vec<AbortHandle>, Option<String>)>,
    failures: Mutex<Vec<Failure>>,
    seq: AtomicUsize,
}

impl Teardown {
    fn register(&self, handle: AbortHandle) {
        let mut guard = self.handles.lock().unwrap();
        if let Some(reason) = &guard.1 {
            handle.abort(reason);
        }
        guard.0.push(handle);
    }

    fn fail(&self, error: JobError, secondary: bool) {
        let order = self.seq.fetch_add(1, Ordering::SeqCst);
        let reason = error.to_string();
        self.failures.lock().unwrap().push(Failure { order, secondary, error });
        let mut guard = self.handles.lock().unwrap();
        if guard.1.is_none() {
            guard.1 = Some(reason.clone());
        }
        for h in &guard.0 {
            h.abort(&reason);
        }
    }
}

/// Runs `entry` once per rank, each on its own thread with a connected
/// [`Communicator`], and returns the per-rank results in rank order.
///
/// The first rank to fail (error or panic) tears down the job. The reported
/// error is the earliest failure that was not itself caused by the teardown.
pub fn spawn_job<T, E, F>(cfg: &JobConfig, entry: F) -> Result<Vec<T>, JobError>
where
    T: Send,
    E: Display,
    F: Fn(Communicator) -> Result<T, E> + Sync,
{
    if cfg.size == 0 {
        return Err(JobError::EmptyJob);
    }
    let teardown = Teardown {
        handles: Mutex::new((Vec::new(), None)),
        failures: Mutex::new(Vec::new()),
        seq: AtomicUsize::new(0),
    };

    let mut in_process = match cfg.backend {
        Backend::InProcess => Communicator::in_process_world(cfg.size, cfg.buffer_cap)
            .into_iter()
            .map(Some)
            .collect(),
        Backend::Tcp => Vec::new(),
    };
    let (mut listener, coordinator) = match cfg.backend {
        Backend::Tcp => {
            let l = TcpListener::bind((Ipv4Addr::LOCALHOST, 0)).map_err(|e| JobError::Setup {
                rank: 0,
                source: e.into(),
            })?;
            let addr = l.local_addr().map_err(|e| JobError::Setup { rank: 0, source: e.into() })?;
            (Some(l), Some(addr))
        }
        Backend::InProcess => (None, None),
    };

    let results: Vec<Option<T>> = thread::scope(|s| {
        let mut handles = Vec::with_capacity(cfg.size);
        for rank in 0..cfg.size {
            let preconnected = in_process.get_mut(rank).and_then(Option::take);
            let listener = if rank == 0 { listener.take() } else { None };
            let teardown = &teardown;
            let entry = &entry;
            let handle = thread::Builder::new()
                .name(format!("mhb-rank-{rank}"))
                .spawn_scoped(s, move || {
                    let comm = match preconnected {
                        Some(c) => c,
                        None => {
                            let mut tcp = TcpConfig::new(rank, cfg.size, coordinator.unwrap());
                            tcp.bind_host = Ipv4Addr::LOCALHOST.into();
                            tcp.timeout = cfg.connect_timeout;
                            tcp.buffer_cap = cfg.buffer_cap;
                            match Communicator::connect_tcp_with_listener(&tcp, listener) {
                                Ok(c) => c,
                                Err(source) => {
                                    teardown.fail(JobError::Setup { rank, source }, false);
                                    return None;
                                }
                            }
                        }
                    };
                    teardown.register(comm.abort_handle());
                    let saw_teardown = comm.teardown_flag();
                    let outcome = panic::catch_unwind(AssertUnwindSafe(|| entry(comm)));
                    let secondary = saw_teardown.load(Ordering::Relaxed);
                    match outcome {
                        Ok(Ok(v)) => Some(v),
                        Ok(Err(e)) => {
                            let error = JobError::Failed { rank, message: e.to_string() };
                            teardown.fail(error, secondary);
                            None
                        }
                        Err(payload) => {
                            let error = JobError::Panicked { rank, message: panic_message(&*payload) };
                            teardown.fail(error, secondary);
                            None
                        }
                    }
                })
                .expect("spawn rank thread");
            handles.push(handle);
        }
        handles.into_iter().map(|h| h.join().ok().flatten()).collect()
    });

    let mut failures = teardown.failures.into_inner().unwrap();
    if let Some(idx) = (0..failures.len()).min_by_key(|&i| (failures[i].secondary, failures[i].order)) {
        return Err(failures.swap_remove(idx).error);
    }
    Ok(results.into_iter().map(|r| r.expect("rank result")).collect())
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Where a rank of an externally launched TCP job finds the coordinator.
pub fn coordinator_from_env() -> Option<SocketAddr> {
    std::env::var(crate::ENV_COORDINATOR).ok()?.parse().ok()
}
