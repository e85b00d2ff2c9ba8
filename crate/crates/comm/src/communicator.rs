use std::fmt;
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::error::{CommError, Result};
use crate::inproc::InProcessEndpoint;
use crate::tcp::{TcpConfig, TcpEndpoint};
use crate::transport::{AbortHandle, Transport};
use crate::Backend;

/// Tags at or above this value are used by collectives and bring-up.
pub const RESERVED_TAG_BASE: u32 = 0xFFFF_0000;
const REDUCE_TAG: u32 = RESERVED_TAG_BASE + 1;
const BCAST_TAG: u32 = RESERVED_TAG_BASE + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Send,
    Recv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: TraceKind,
    pub peer: usize,
    pub tag: u32,
    pub payload: Vec<u8>,
}

/// Counter snapshot; subtract two snapshots to count what happened between.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommCounters {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub messages_received: u64,
    pub bytes_received: u64,
    pub allreduces: u64,
    pub barriers: u64,
    pub halo_exchanges: u64,
    pub halo_ns: u64,
    pub allreduce_ns: u64,
}

impl std::ops::Sub for CommCounters {
    type Output = CommCounters;

    fn sub(self, rhs: CommCounters) -> CommCounters {
        CommCounters {
            messages_sent: self.messages_sent - rhs.messages_sent,
            bytes_sent: self.bytes_sent - rhs.bytes_sent,
            messages_received: self.messages_received - rhs.messages_received,
            bytes_received: self.bytes_received - rhs.bytes_received,
            allreduces: self.allreduces - rhs.allreduces,
            barriers: self.barriers - rhs.barriers,
            halo_exchanges: self.halo_exchanges - rhs.halo_exchanges,
            halo_ns: self.halo_ns - rhs.halo_ns,
            allreduce_ns: self.allreduce_ns - rhs.allreduce_ns,
        }
    }
}

#[derive(Debug, Default)]
struct Stats {
    messages_sent: AtomicU64,
    bytes_sent: AtomicU64,
    messages_received: AtomicU64,
    bytes_received: AtomicU64,
    allreduces: AtomicU64,
    barriers: AtomicU64,
    halo_exchanges: AtomicU64,
    halo_ns: AtomicU64,
    allreduce_ns: AtomicU64,
}

/// A rank's endpoint into a job.
///
/// All operations block the caller until complete. Messages between a fixed
/// `(source, dest, tag)` are received in the order they were sent.
pub struct Communicator {
    rank: usize,
    size: usize,
    backend: Backend,
    transport: Box<dyn Transport>,
    stats: Stats,
    trace: Mutex<Option<Vec<TraceEvent>>>,
    /// Set once an operation failed because a peer went away or the job
    /// was aborted.
    saw_teardown: Arc<AtomicBool>,
}

impl fmt::Debug for Communicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Communicator")
            .field("rank", &self.rank)
            .field("size", &self.size)
            .field("backend", &self.backend)
            .finish_non_exhaustive()
    }
}

impl Communicator {
    fn new(rank: usize, size: usize, backend: Backend, transport: Box<dyn Transport>) -> Self {
        Communicator {
            rank,
            size,
            backend,
            transport,
            stats: Stats::default(),
            trace: Mutex::new(None),
            saw_teardown: Arc::new(AtomicBool::new(false)),
        }
    }

    /// Endpoints for `size` ranks sharing this process, indexed by rank.
    pub fn in_process_world(size: usize, buffer_cap: usize) -> Vec<Communicator> {
        InProcessEndpoint::world(size, buffer_cap)
            .into_iter()
            .enumerate()
            .map(|(rank, ep)| Communicator::new(rank, size, Backend::InProcess, Box::new(ep)))
            .collect()
    }

    /// Joins a TCP job. Blocks until the full mesh is connected or the
    /// configured timeout expires.
    pub fn connect_tcp(cfg: &TcpConfig) -> Result<Communicator> {
        Self::connect_tcp_with_listener(cfg, None)
    }

    pub(crate) fn connect_tcp_with_listener(
        cfg: &TcpConfig,
        listener: Option<TcpListener>,
    ) -> Result<Communicator> {
        let ep = TcpEndpoint::connect(cfg, listener)?;
        Ok(Communicator::new(cfg.rank, cfg.size, Backend::Tcp, Box::new(ep)))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn abort_handle(&self) -> AbortHandle {
        self.transport.abort_handle()
    }

    fn check_rank(&self, rank: usize) -> Result<()> {
        if rank >= self.size {
            return Err(CommError::RankOutOfRange { rank, size: self.size });
        }
        Ok(())
    }

    fn check_tag(tag: u32) -> Result<()> {
        if tag >= RESERVED_TAG_BASE {
            return Err(CommError::ReservedTag(tag));
        }
        Ok(())
    }

    /// Buffered send. Returns once the payload is queued for `dest`, which
    /// may block while the per-pair buffer cap is exhausted.
    pub fn send(&self, dest: usize, tag: u32, payload: &[u8]) -> Result<()> {
        self.send_owned(dest, tag, payload.to_vec())
    }

    pub fn send_owned(&self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<()> {
        Self::check_tag(tag)?;
        self.check_rank(dest)?;
        self.raw_send(dest, tag, payload)
    }

    /// Receives the oldest unconsumed message from `source` with `tag`.
    pub fn recv(&self, source: usize, tag: u32) -> Result<Vec<u8>> {
        Self::check_tag(tag)?;
        self.check_rank(source)?;
        self.raw_recv(source, tag)
    }

    fn raw_send(&self, dest: usize, tag: u32, payload: Vec<u8>) -> Result<()> {
        self.stats.messages_sent.fetch_add(1, Ordering::Relaxed);
        self.stats.bytes_sent.fetch_add(payload.len() as u64, Ordering::Relaxed);
        if let Some(trace) = self.trace.lock().unwrap().as_mut() {
            trace.push(TraceEvent { kind: TraceKind::Send, peer: dest, tag, payload: payload.clone() });
        }
        self.transport.send(dest, tag, payload).map_err(|e| self.note(e))
    }

    fn note(&self, e: CommError) -> CommError {
        if matches!(e, CommError::Aborted(_) | CommError::Disconnected { .. }) {
            self.saw_teardown.store(true, Ordering::Relaxed);
        }
        e
    }

    pub(crate) fn teardown_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.saw_teardown)
    }

    fn raw_recv(&self, source: usize, tag: u32) -> Result<Vec<u8>> {
        let payload = self.transport.recv(source, tag).map_err(|e| self.note(e))?;
        self.stats.messages_received.fetch_add(1, Ordering::Relaxed);
        self.stats.bytes_received.fetch_add(payload.len() as u64, Ordering::Relaxed);
        if let Some(trace) = self.trace.lock().unwrap().as_mut() {
            trace.push(TraceEvent { kind: TraceKind::Recv, peer: source, tag, payload: payload.clone() });
        }
        Ok(payload)
    }

    /// Binomial-tree reduction to rank 0. Rank 0 returns the combined value,
    /// other ranks return `None`. Partial results are always combined as
    /// `own ⊕ child`, children in increasing distance, so the order depends
    /// only on the communicator size.
    fn reduce_to_root<F>(&self, local: Vec<u8>, combine: F) -> Result<Option<Vec<u8>>>
    where
        F: Fn(&[u8], &[u8]) -> Result<Vec<u8>>,
    {
        let mut acc = local;
        let mut mask = 1;
        while mask < self.size {
            if self.rank & mask != 0 {
                self.raw_send(self.rank - mask, REDUCE_TAG, acc)?;
                return Ok(None);
            }
            if self.rank + mask < self.size {
                let other = self.raw_recv(self.rank + mask, REDUCE_TAG)?;
                acc = combine(&acc, &other)?;
            }
            mask <<= 1;
        }
        Ok(Some(acc))
    }

    /// Binomial-tree broadcast from rank 0; `payload` is only read on rank 0.
    pub fn broadcast_from_root(&self, payload: Option<Vec<u8>>) -> Result<Vec<u8>> {
        let (data, mut mask) = if self.rank == 0 {
            (payload.unwrap_or_default(), self.size.next_power_of_two())
        } else {
            let low = self.rank & self.rank.wrapping_neg();
            (self.raw_recv(self.rank - low, BCAST_TAG)?, low)
        };
        mask >>= 1;
        while mask > 0 {
            if self.rank + mask < self.size {
                self.raw_send(self.rank + mask, BCAST_TAG, data.clone())?;
            }
            mask >>= 1;
        }
        Ok(data)
    }

    /// Global sum, bit-identical on every rank.
    pub fn allreduce_sum(&self, local: f64) -> Result<f64> {
        let start = std::time::Instant::now();
        let reduced = self.reduce_to_root(local.to_le_bytes().to_vec(), |a, b| {
            Ok((decode_f64(a)? + decode_f64(b)?).to_le_bytes().to_vec())
        })?;
        let out = decode_f64(&self.broadcast_from_root(reduced)?)?;
        self.stats.allreduces.fetch_add(1, Ordering::Relaxed);
        self.stats
            .allreduce_ns
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        Ok(out)
    }

    /// No rank returns before every rank has entered.
    pub fn barrier(&self) -> Result<()> {
        let reduced = self.reduce_to_root(Vec::new(), |_, _| Ok(Vec::new()))?;
        self.broadcast_from_root(reduced)?;
        self.stats.barriers.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Records one halo exchange and its duration in this endpoint's counters.
    pub fn record_exchange(&self, elapsed: Duration) {
        self.stats.halo_exchanges.fetch_add(1, Ordering::Relaxed);
        self.stats.halo_ns.fetch_add(elapsed.as_nanos() as u64, Ordering::Relaxed);
    }

    pub fn counters(&self) -> CommCounters {
        let s = &self.stats;
        CommCounters {
            messages_sent: s.messages_sent.load(Ordering::Relaxed),
            bytes_sent: s.bytes_sent.load(Ordering::Relaxed),
            messages_received: s.messages_received.load(Ordering::Relaxed),
            bytes_received: s.bytes_received.load(Ordering::Relaxed),
            allreduces: s.allreduces.load(Ordering::Relaxed),
            barriers: s.barriers.load(Ordering::Relaxed),
            halo_exchanges: s.halo_exchanges.load(Ordering::Relaxed),
            halo_ns: s.halo_ns.load(Ordering::Relaxed),
            allreduce_ns: s.allreduce_ns.load(Ordering::Relaxed),
        }
    }

    /// Starts recording every message sent and received, including those
    /// issued by collectives.
    pub fn start_trace(&self) {
        *self.trace.lock().unwrap() = Some(Vec::new());
    }

    pub fn take_trace(&self) -> Vec<TraceEvent> {
        self.trace.lock().unwrap().take().unwrap_or_default()
    }
}

fn decode_f64(bytes: &[u8]) -> Result<f64> {
    let arr: [u8; 8] = bytes
        .try_into()
        .map_err(|_| CommError::Decode { len: bytes.len(), what: "f64" })?;
    Ok(f64::from_le_bytes(arr))
}
