//! Per-rank receive queues shared by both backends.

use std::collections::{HashMap, VecDeque};
use std::sync::{Condvar, Mutex, MutexGuard};

use crate::error::{CommError, Result};

#[derive(Debug)]
struct State {
    queues: HashMap<(usize, u32), VecDeque<Vec<u8>>>,
    /// Bytes delivered but not yet received, per source rank.
    pending: Vec<usize>,
    closed: Vec<bool>,
    aborted: Option<String>,
}

/// Incoming messages for one rank, matched by exact `(source, tag)`.
#[derive(Debug)]
pub(crate) struct Mailbox {
    state: Mutex<State>,
    arrived: Condvar,
    drained: Condvar,
    cap: usize,
}

impl Mailbox {
    pub(crate) fn new(size: usize, cap: usize) -> Self {
        Mailbox {
            state: Mutex::new(State {
                queues: HashMap::new(),
                pending: vec![0; size],
                closed: vec![false; size],
                aborted: None,
            }),
            arrived: Condvar::new(),
            drained: Condvar::new(),
            cap,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Enqueues a message, blocking while the source already has `cap`
    /// bytes outstanding here. A single message larger than the cap is
    /// accepted once the queue from that source is empty.
    pub(crate) fn deliver(&self, source: usize, tag: u32, payload: Vec<u8>) -> Result<()> {
        let len = payload.len();
        let mut st = self.lock();
        loop {
            if let Some(reason) = &st.aborted {
                return Err(CommError::Aborted(reason.clone()));
            }
            let pending = st.pending[source];
            if pending == 0 || pending + len <= self.cap {
                break;
            }
            st = self.drained.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.pending[source] += len;
        st.queues.entry((source, tag)).or_default().push_back(payload);
        drop(st);
        self.arrived.notify_all();
        Ok(())
    }

    /// Removes the oldest message from `source` with `tag`, blocking until one
    /// arrives, the source disconnects, or the job is aborted.
    pub(crate) fn take(&self, source: usize, tag: u32) -> Result<Vec<u8>> {
        let mut st = self.lock();
        loop {
            if let Some(reason) = &st.aborted {
                return Err(CommError::Aborted(reason.clone()));
            }
            if let Some(payload) = st.queues.get_mut(&(source, tag)).and_then(VecDeque::pop_front) {
                st.pending[source] -= payload.len();
                drop(st);
                self.drained.notify_all();
                return Ok(payload);
            }
            if st.closed[source] {
                return Err(CommError::Disconnected { source_rank: source, tag });
            }
            st = self.arrived.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Marks `source` as finished: receives that cannot be satisfied from
    /// already-queued messages fail instead of blocking.
    pub(crate) fn close_source(&self, source: usize) {
        self.lock().closed[source] = true;
        self.arrived.notify_all();
    }

    pub(crate) fn abort(&self, reason: &str) {
        let mut st = self.lock();
        if st.aborted.is_none() {
            st.aborted = Some(reason.to_string());
        }
        drop(st);
        self.arrived.notify_all();
        self.drained.notify_all();
    }
}
