use std::time::Instant;

use crate::error::{BenchError, Result};

/// Source of monotonic nanosecond timestamps.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// Wall clock backed by [`Instant`]; timestamps count from construction.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub trials: usize,
    pub warmup: usize,
    /// Tukey fence multiplier used when summarizing.
    pub tukey_k: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig { trials: 100, warmup: 10, tukey_k: 1.5 }
    }
}

impl TrialConfig {
    pub fn new(trials: usize, warmup: usize) -> Self {
        TrialConfig { trials, warmup, ..Default::default() }
    }

    pub fn invocations(&self) -> usize {
        self.trials + self.warmup
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(BenchError::Config("at least one trial is required".into()));
        }
        if !(self.tukey_k >= 0.0) {
            return Err(BenchError::Config(format!("tukey k must be non-negative, got {}", self.tukey_k)));
        }
        Ok(())
    }
}

/// Runs `thunk` `warmup + trials` times, timing each call with `clock`.
/// The first `warmup` durations are dropped; the rest are returned in
/// execution order.
pub fn run_trials<C, F>(cfg: &TrialConfig, clock: &C, mut thunk: F) -> Result<Vec<u64>>
where
    C: Clock + ?Sized,
    F: FnMut() -> Result<()>,
{
    run_measured_trials(cfg, |_| {
        let start = clock.now_ns();
        thunk()?;
        Ok(clock.now_ns().saturating_sub(start))
    })
}

/// Like [`run_trials`] but the thunk measures itself and returns the
/// duration in nanoseconds. It receives the invocation index; indices below
/// `cfg.warmup` are warm-up runs whose result is discarded.
///
/// Used when only part of each invocation should be timed, or when the
/// timestamps are taken on another thread or rank.
pub fn run_measured_trials<F>(cfg: &TrialConfig, mut thunk: F) -> Result<Vec<u64>>
where
    F: FnMut(usize) -> Result<u64>,
{
    cfg.validate()?;
    let total = cfg.invocations();
    let mut samples = Vec::with_capacity(cfg.trials);
    for index in 0..total {
        match thunk(index) {
            Ok(ns) if index >= cfg.warmup => samples.push(ns),
            Ok(_) => {}
            Err(e) => {
                return Err(BenchError::Trial {
                    index,
                    total,
                    recorded: samples.len(),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(samples)
}
