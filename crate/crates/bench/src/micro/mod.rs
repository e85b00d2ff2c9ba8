//! Intra-node microbenchmarks over this crate's own queue and worker pool.

mod channel;
mod pool;

use std::hint::black_box;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

pub use channel::BoundedQueue;
pub use pool::WorkerPool;

use crate::error::{BenchError, Result};
use crate::harness::{run_measured_trials, Clock, MonotonicClock, TrialConfig, TrialSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MicroKind {
    #[value(name = "channel_ops")]
    ChannelOps,
    Notify,
    Spawn,
    #[value(name = "parinit")]
    ParInit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroParams {
    /// Queue operations timed together per channel_ops sample.
    pub ops_per_sample: usize,
    pub fib_n: u32,
    /// Pool width for spawn.
    pub spawn_workers: usize,
    /// Worker count for parinit.
    pub parinit_workers: usize,
    pub array_bytes: usize,
}

impl Default for MicroParams {
    fn default() -> Self {
        MicroParams { ops_per_sample: 1000, fib_n: 20, spawn_workers: 1, parinit_workers: 4, array_bytes: 50_000_000 }
    }
}

pub fn micro_run(kind: MicroKind, params: &MicroParams, trials: &TrialConfig) -> Result<Vec<TrialSeries>> {
    match kind {
        MicroKind::ChannelOps => channel_ops(params.ops_per_sample, trials),
        MicroKind::Notify => notify(trials).map(|s| vec![s]),
        MicroKind::Spawn => spawn(params.spawn_workers, params.fib_n, trials),
        MicroKind::ParInit => parinit(params.array_bytes, params.parinit_workers, trials),
    }
}

fn per_op(total: u64, ops: usize) -> u64 {
    ((total as f64 / ops as f64).round() as u64).max(1)
}

/// Average latency of put, fetch (peek) and take on a bounded queue, each
/// timed over a batch of `ops` operations.
pub fn channel_ops(ops: usize, trials: &TrialConfig) -> Result<Vec<TrialSeries>> {
    if ops == 0 {
        return Err(BenchError::Config("ops per sample must be positive".into()));
    }
    let q = BoundedQueue::new(ops);
    let mut lat: [Vec<u64>; 3] = Default::default();
    run_measured_trials(trials, |trial| {
        let t0 = Instant::now();
        for i in 0..ops {
            q.put(i as u64);
        }
        let t1 = Instant::now();
        let mut sum = 0u64;
        for _ in 0..ops {
            sum = sum.wrapping_add(q.fetch());
        }
        let t2 = Instant::now();
        for _ in 0..ops {
            sum = sum.wrapping_add(q.take());
        }
        let t3 = Instant::now();
        let expected = (ops as u64 - 1) * ops as u64 / 2;
        if black_box(sum) != expected {
            return Err(BenchError::Integrity(format!("queue returned sum {sum}, expected {expected}")));
        }
        if trial >= trials.warmup {
            for (k, (a, b)) in [(t0, t1), (t1, t2), (t2, t3)].into_iter().enumerate() {
                lat[k].push(per_op((b - a).as_nanos() as u64, ops));
            }
        }
        Ok((t3 - t0).as_nanos() as u64)
    })?;
    let [put, fetch, take] = lat;
    Ok([("put", put), ("fetch", fetch), ("take", take)]
        .into_iter()
        .map(|(op, samples)| {
            TrialSeries::new("channel_ops").param("op", op).param("ops_per_sample", ops).samples(samples)
        })
        .collect())
}

/// Wake-up latency through a rendezvous queue: the measuring thread blocks
/// in `take`; a separate waker thread enqueues once it sees the taker
/// blocked and stamps the time right after the enqueue.
pub fn notify(trials: &TrialConfig) -> Result<TrialSeries> {
    let clock = MonotonicClock::new();
    let q = Arc::new(BoundedQueue::<u64>::new(0));
    let go = Arc::new(BoundedQueue::<Option<u64>>::new(1));
    let stamp = Arc::new(AtomicU64::new(0));

    let waker = {
        let (q, go, stamp) = (q.clone(), go.clone(), stamp.clone());
        thread::Builder::new()
            .name("mhb-waker".into())
            .spawn(move || {
                while let Some(seq) = go.take() {
                    while q.waiting_takers() == 0 {
                        thread::yield_now();
                    }
                    q.put_then(seq, || stamp.store(clock.now_ns(), Ordering::Release));
                }
            })
            .expect("spawn waker")
    };

    let result = run_measured_trials(trials, |trial| {
        let seq = trial as u64 + 1;
        go.put(Some(seq));
        let got = q.take();
        let woke = clock.now_ns();
        if got != seq {
            return Err(BenchError::Integrity(format!("woke with message {got}, expected {seq}")));
        }
        let posted = stamp.load(Ordering::Acquire);
        Ok(woke.saturating_sub(posted).max(1))
    });
    go.put(None);
    let _ = waker.join();
    Ok(TrialSeries::new("notify").samples(result?))
}

/// Naive recursive Fibonacci; deliberately slow.
pub fn fib(n: u32) -> u64 {
    if n < 2 {
        n as u64
    } else {
        fib(n - 1) + fib(n - 2)
    }
}

/// The fib task: computes each of the first `n` Fibonacci numbers by
/// recursion and returns the last, `fib(n)`.
pub fn fib_task(n: u32) -> u64 {
    let mut last = 0;
    for k in 0..=n {
        last = black_box(fib(black_box(k)));
    }
    last
}

/// Iterative reference, independent of [`fib`].
fn fib_reference(n: u32) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..n {
        (a, b) = (b, a + b);
    }
    a
}

/// Latency from creating a task to receiving its result, for a null task
/// and for the fib task.
pub fn spawn(workers: usize, fib_n: u32, trials: &TrialConfig) -> Result<Vec<TrialSeries>> {
    if workers == 0 {
        return Err(BenchError::Config("spawn needs at least one worker".into()));
    }
    let pool = WorkerPool::new(workers);
    let null = run_measured_trials(trials, |_| {
        let t0 = Instant::now();
        let slot = pool.submit(|| 0u64);
        let v = slot.take();
        let ns = t0.elapsed().as_nanos() as u64;
        if v != 0 {
            return Err(BenchError::Integrity(format!("null task returned {v}")));
        }
        Ok(ns.max(1))
    })?;
    let expected = fib_reference(fib_n);
    let fibs = run_measured_trials(trials, |_| {
        let t0 = Instant::now();
        let slot = pool.submit(move || fib_task(fib_n));
        let v = slot.take();
        let ns = t0.elapsed().as_nanos() as u64;
        if v != expected {
            return Err(BenchError::Integrity(format!("fib({fib_n}) task returned {v}, expected {expected}")));
        }
        Ok(ns.max(1))
    })?;
    Ok(vec![
        TrialSeries::new("spawn").param("task", "null").param("workers", workers).samples(null),
        TrialSeries::new("spawn").param("task", format!("fib{fib_n}")).param("workers", workers).samples(fibs),
    ])
}

fn init_value(i: usize) -> f64 {
    i as f64 + 1.0
}

fn verify_init(a: &[f64]) -> Result<()> {
    match a.iter().enumerate().find(|&(i, &v)| v != init_value(i)) {
        None => Ok(()),
        Some((i, v)) => Err(BenchError::Integrity(format!("array element {i} is {v} after initialization"))),
    }
}

/// Initializes `a` split into `workers` contiguous chunks, one thread each.
pub fn parallel_init(a: &mut [f64], workers: usize) {
    let chunk = a.len().div_ceil(workers.max(1)).max(1);
    thread::scope(|s| {
        for (c, part) in a.chunks_mut(chunk).enumerate() {
            s.spawn(move || {
                let base = c * chunk;
                for (j, x) in part.iter_mut().enumerate() {
                    *x = init_value(base + j);
                }
            });
        }
    });
}

pub fn sequential_init(a: &mut [f64]) {
    for (i, x) in a.iter_mut().enumerate() {
        *x = init_value(i);
    }
}

/// Wall time to initialize an `array_bytes` array across `workers` threads,
/// plus a plain sequential loop as baseline. The array is reset outside the
/// timed region and verified after each trial.
pub fn parinit(array_bytes: usize, workers: usize, trials: &TrialConfig) -> Result<Vec<TrialSeries>> {
    if workers == 0 {
        return Err(BenchError::Config("parinit needs at least one worker".into()));
    }
    let len = (array_bytes / std::mem::size_of::<f64>()).max(1);
    let mut a = vec![f64::NAN; len];
    let mut timed = |init: &mut dyn FnMut(&mut [f64])| {
        run_measured_trials(trials, |_| {
            a.fill(f64::NAN);
            let t0 = Instant::now();
            init(&mut a);
            let ns = t0.elapsed().as_nanos() as u64;
            verify_init(&a)?;
            Ok(ns.max(1))
        })
    };
    let par = timed(&mut |a| parallel_init(a, workers))?;
    let seq = timed(&mut |a| sequential_init(a))?;
    Ok(vec![
        TrialSeries::new("parinit").param("workers", workers).param("array_bytes", array_bytes).samples(par),
        TrialSeries::new("parinit_sequential").param("array_bytes", array_bytes).samples(seq),
    ])
}
