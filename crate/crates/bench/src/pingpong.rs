//! Round-trip latency between ranks 0 and 1 over a range of message sizes.

use std::time::Instant;

use mhb_comm::Communicator;

use crate::error::{BenchError, Result};
use crate::harness::{harmonic_mean, run_measured_trials, TrialConfig, TrialSeries};

const PING_TAG: u32 = 20;
const PONG_TAG: u32 = 21;

pub const DEFAULT_MAX_BYTES: usize = 1 << 20;

/// Powers of two from 1 up to `max_bytes`, plus `max_bytes` itself.
pub fn pingpong_sizes(max_bytes: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = std::iter::successors(Some(1usize), |s| s.checked_mul(2))
        .take_while(|&s| s <= max_bytes)
        .collect();
    if max_bytes > 0 && sizes.last() != Some(&max_bytes) {
        sizes.push(max_bytes);
    }
    sizes
}

fn pattern(size: usize, trial: usize) -> Vec<u8> {
    (0..size).map(|i| (i.wrapping_mul(131).wrapping_add(trial)) as u8).collect()
}

#[derive(Debug, Clone)]
pub struct PingPongReport {
    /// One series per size; samples are round-trip times.
    pub series: Vec<TrialSeries>,
    /// Per size, one-way throughput from the mean round trip, bytes/s.
    pub throughputs: Vec<f64>,
    /// Harmonic mean of `throughputs`.
    pub harmonic_mean_throughput: f64,
}

/// Rank 0 sends, rank 1 echoes; rank 0 times the round trip and checks the
/// echo. Needs exactly two ranks. Returns the report on rank 0.
pub fn pingpong_run(comm: &Communicator, sizes: &[usize], trials: &TrialConfig) -> Result<Option<PingPongReport>> {
    if comm.size() != 2 {
        return Err(BenchError::Config(format!("ping-pong needs exactly 2 ranks, job has {}", comm.size())));
    }
    let rank = comm.rank();
    let mut series = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 {
            return Err(BenchError::Config("ping-pong sizes must be positive".into()));
        }
        comm.barrier()?;
        let samples = run_measured_trials(trials, |trial| {
            if rank == 1 {
                let msg = comm.recv(0, PING_TAG)?;
                comm.send_owned(0, PONG_TAG, msg)?;
                return Ok(0);
            }
            let msg = pattern(size, trial);
            let start = Instant::now();
            comm.send(1, PING_TAG, &msg)?;
            let echo = comm.recv(1, PONG_TAG)?;
            let rtt = start.elapsed().as_nanos() as u64;
            if echo != msg {
                return Err(BenchError::Integrity(format!("echo of {size} bytes differs in trial {trial}")));
            }
            Ok(rtt.max(1))
        })?;
        if rank == 0 {
            // one-way throughput: size / (rtt / 2) = 2 size / rtt
            series.push(
                TrialSeries::new("pingpong")
                    .param("msg_bytes", size)
                    .param("backend", comm.backend())
                    .throughput(2 * size as u64)
                    .samples(samples),
            );
        }
    }
    if rank != 0 {
        return Ok(None);
    }
    let throughputs: Vec<f64> = series
        .iter()
        .map(|s| {
            let mean = s.samples.iter().sum::<u64>() as f64 / s.samples.len() as f64;
            s.throughput_bytes.unwrap() as f64 * 1e9 / mean
        })
        .collect();
    let harmonic_mean_throughput = harmonic_mean(&throughputs).unwrap_or(0.0);
    Ok(Some(PingPongReport { series, throughputs, harmonic_mean_throughput }))
}
