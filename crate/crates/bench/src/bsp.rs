//! Bulk-synchronous ring benchmark: every step each rank reads, writes and
//! computes on a private array, then sends to its forward neighbour and
//! receives from its backward neighbour.

use std::hint::black_box;
use std::time::Instant;

use mhb_comm::Communicator;

use crate::error::{BenchError, Result};
use crate::harness::{run_measured_trials, TrialConfig, TrialSeries};

pub const STEP_TAG: u32 = 10;
pub const TOKEN_TAG: u32 = 11;
/// Step counter (u64) followed by origin rank (u32).
pub const PAYLOAD_HEADER_LEN: usize = 12;

pub const OPS: [&str; 4] = ["read", "write", "flop", "comm"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BspConfig {
    pub steps: usize,
    pub reads: usize,
    pub writes: usize,
    /// Multiply-add operations per step.
    pub flops: usize,
    pub array_bytes: usize,
    pub msg_bytes: usize,
    /// Forward the received payload instead of sending a fresh one, so that
    /// each rank's token travels around the ring.
    pub forward: bool,
}

impl Default for BspConfig {
    fn default() -> Self {
        BspConfig {
            steps: 10,
            reads: 1_000_000,
            writes: 1_000_000,
            flops: 1_000_000,
            array_bytes: 8 << 20,
            msg_bytes: 64 << 10,
            forward: false,
        }
    }
}

impl BspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.msg_bytes == 0 {
            return Err(BenchError::Config("bsp message size must be at least one byte".into()));
        }
        Ok(())
    }

    fn array_len(&self) -> usize {
        (self.array_bytes / std::mem::size_of::<f64>()).max(1)
    }
}

/// Deterministic message body for `(step, origin)`. The first bytes hold the
/// step and origin (truncated for tiny messages); the rest is a fill pattern.
pub fn make_payload(step: u64, origin: u32, len: usize) -> Vec<u8> {
    let mut header = [0u8; PAYLOAD_HEADER_LEN];
    header[..8].copy_from_slice(&step.to_le_bytes());
    header[8..].copy_from_slice(&origin.to_le_bytes());
    let seed = (origin as u64).wrapping_mul(31).wrapping_add(step.wrapping_mul(7));
    (0..len)
        .map(|i| if i < PAYLOAD_HEADER_LEN { header[i] } else { seed.wrapping_add(i as u64) as u8 })
        .collect()
}

/// Reads `(step, origin)` back from a payload of at least header length.
pub fn payload_header(payload: &[u8]) -> Option<(u64, u32)> {
    if payload.len() < PAYLOAD_HEADER_LEN {
        return None;
    }
    let step = u64::from_le_bytes(payload[..8].try_into().unwrap());
    let origin = u32::from_le_bytes(payload[8..12].try_into().unwrap());
    Some((step, origin))
}

fn check_payload(got: &[u8], step: u64, origin: u32, len: usize, me: usize) -> Result<()> {
    if got == make_payload(step, origin, len).as_slice() {
        return Ok(());
    }
    let found = match payload_header(got) {
        Some((s, o)) => format!("step {s} from rank {o}"),
        None => format!("{} bytes", got.len()),
    };
    Err(BenchError::Integrity(format!(
        "rank {me} expected step {step} from rank {origin} ({len} bytes), got {found}"
    )))
}

fn forward(r: usize, p: usize) -> usize {
    (r + 1) % p
}

fn backward(r: usize, p: usize) -> usize {
    (r + p - 1) % p
}

/// Passes each rank's token around the ring for `steps` steps, forwarding
/// whatever arrived. Each hop is checked; returns the token held at the end
/// (the rank's own token whenever `steps` is a multiple of the size).
pub fn rotate_tokens(comm: &Communicator, steps: usize, msg_bytes: usize) -> Result<Vec<u8>> {
    let (r, p) = (comm.rank(), comm.size());
    let mut held = make_payload(0, r as u32, msg_bytes.max(PAYLOAD_HEADER_LEN));
    for s in 0..steps {
        comm.send_owned(forward(r, p), TOKEN_TAG, held)?;
        held = comm.recv(backward(r, p), TOKEN_TAG)?;
        let origin = (r + p * (s + 1) - (s + 1)) % p;
        check_payload(&held, 0, origin as u32, msg_bytes.max(PAYLOAD_HEADER_LEN), r)?;
    }
    Ok(held)
}

/// Per-rank working set for the compute phases.
struct Workspace {
    array: Vec<f64>,
    cursor: usize,
    checksum: f64,
}

impl Workspace {
    fn new(len: usize) -> Self {
        Workspace { array: (0..len).map(|i| (i % 1024) as f64 * 1e-3).collect(), cursor: 0, checksum: 0.0 }
    }

    fn advance(&mut self) -> usize {
        let i = self.cursor;
        self.cursor += 1;
        if self.cursor == self.array.len() {
            self.cursor = 0;
        }
        i
    }

    fn reads(&mut self, n: usize) {
        let mut acc = 0.0;
        for _ in 0..n {
            let i = self.advance();
            acc += self.array[i];
        }
        self.checksum += black_box(acc);
    }

    fn writes(&mut self, n: usize, step: usize) {
        let base = step as f64;
        for _ in 0..n {
            let i = self.advance();
            self.array[i] = base + (i % 1024) as f64 * 1e-3;
        }
        black_box(&mut self.array);
    }

    fn flops(&mut self, n: usize) {
        let seed = self.array[self.cursor];
        let mut acc = [seed, seed + 0.25, seed + 0.5, seed + 0.75];
        for j in 0..n {
            let a = &mut acc[j & 3];
            *a = *a * 0.999_999 + 1e-6;
        }
        self.checksum += black_box(acc.iter().sum::<f64>());
    }
}

#[derive(Default)]
struct OpTimes {
    ns: [u64; 4],
}

/// Result of [`bsp_run`] at rank 0.
#[derive(Debug, Clone)]
pub struct BspOutcome {
    pub series: TrialSeries,
    /// Folded compute results, reported so the work cannot be optimized away.
    pub checksum: f64,
}

/// Runs the ring benchmark on every rank; rank 0 takes the timestamps and
/// returns the series. Collective.
pub fn bsp_run(comm: &Communicator, cfg: &BspConfig, trials: &TrialConfig) -> Result<Option<BspOutcome>> {
    cfg.validate()?;
    let (r, p) = (comm.rank(), comm.size());
    let len = cfg.msg_bytes.max(if cfg.forward { PAYLOAD_HEADER_LEN } else { 1 });
    let mut ws = Workspace::new(cfg.array_len());
    let mut ops = OpTimes::default();

    let samples = run_measured_trials(trials, |trial| {
        let measured = trial >= trials.warmup;
        comm.barrier()?;
        let start = Instant::now();
        let mut held = make_payload(0, r as u32, len);
        for s in 0..cfg.steps {
            let t0 = Instant::now();
            ws.reads(cfg.reads);
            let t1 = Instant::now();
            ws.writes(cfg.writes, s);
            let t2 = Instant::now();
            ws.flops(cfg.flops);
            let t3 = Instant::now();
            if cfg.forward {
                comm.send_owned(forward(r, p), STEP_TAG, held)?;
                held = comm.recv(backward(r, p), STEP_TAG)?;
                let origin = (r + p * (s + 1) - (s + 1)) % p;
                check_payload(&held, 0, origin as u32, len, r)?;
            } else {
                comm.send_owned(forward(r, p), STEP_TAG, make_payload(s as u64, r as u32, len))?;
                let got = comm.recv(backward(r, p), STEP_TAG)?;
                check_payload(&got, s as u64, backward(r, p) as u32, len, r)?;
            }
            let t4 = Instant::now();
            if measured {
                for (k, (a, b)) in [(t0, t1), (t1, t2), (t2, t3), (t3, t4)].into_iter().enumerate() {
                    ops.ns[k] += (b - a).as_nanos() as u64;
                }
            }
        }
        let elapsed = start.elapsed().as_nanos() as u64;
        if cfg.forward && cfg.steps.is_multiple_of(p) && held != make_payload(0, r as u32, len) {
            return Err(BenchError::Integrity(format!("rank {r} did not get its own token back")));
        }
        Ok(elapsed)
    })?;

    let checksum = black_box(ws.checksum + ws.array[0]);
    if !checksum.is_finite() {
        return Err(BenchError::Integrity(format!("rank {r} compute checksum is {checksum}")));
    }
    if r != 0 {
        return Ok(None);
    }
    let series = TrialSeries::new("bsp")
        .param("np", p)
        .param("steps", cfg.steps)
        .param("reads", cfg.reads)
        .param("writes", cfg.writes)
        .param("flops", cfg.flops)
        .param("array_bytes", cfg.array_bytes)
        .param("msg_bytes", cfg.msg_bytes)
        .param("forward", cfg.forward)
        .param("backend", comm.backend())
        .samples(samples)
        .breakdown(OPS.iter().zip(ops.ns).map(|(n, v)| (n.to_string(), v)).collect());
    Ok(Some(BspOutcome { series, checksum }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_header_round_trip() {
        let p = make_payload(42, 7, 100);
        assert_eq!(payload_header(&p), Some((42, 7)));
        assert_eq!(make_payload(1, 2, 1).len(), 1);
        assert_ne!(make_payload(1, 2, 64), make_payload(1, 3, 64));
    }

    #[test]
    fn ring_neighbours() {
        assert_eq!((forward(3, 4), backward(0, 4)), (0, 3));
        assert_eq!((forward(0, 1), backward(0, 1)), (0, 0));
    }
}
