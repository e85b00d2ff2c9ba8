use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::channel::BoundedQueue;

type Job = Box<dyn FnOnce() + Send + 'static>;

const QUEUE_DEPTH: usize = 1024;

/// Fixed set of worker threads taking closures from a shared queue.
pub struct WorkerPool {
    queue: Arc<BoundedQueue<Option<Job>>>,
    workers: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn new(width: usize) -> Self {
        assert!(width > 0, "pool needs at least one worker");
        let queue: Arc<BoundedQueue<Option<Job>>> = Arc::new(BoundedQueue::new(QUEUE_DEPTH));
        let workers = (0..width)
            .map(|i| {
                let q = queue.clone();
                thread::Builder::new()
                    .name(format!("mhb-worker-{i}"))
                    .spawn(move || {
                        while let Some(job) = q.take() {
                            job();
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();
        WorkerPool { queue, workers }
    }

    pub fn width(&self) -> usize {
        self.workers.len()
    }

    pub fn spawn(&self, job: impl FnOnce() + Send + 'static) {
        self.queue.put(Some(Box::new(job)));
    }

    /// Runs `job` on a worker and returns a slot to wait on for its result.
    pub fn submit<T: Send + 'static>(&self, job: impl FnOnce() -> T + Send + 'static) -> Arc<BoundedQueue<T>> {
        let slot = Arc::new(BoundedQueue::new(1));
        let out = slot.clone();
        self.spawn(move || out.put(job()));
        slot
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.queue.put(None);
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
