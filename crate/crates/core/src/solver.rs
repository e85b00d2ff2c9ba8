//! Preconditioned conjugate gradients and the distributed regression check.

use std::fmt;
use std::time::Instant;

use mhb_comm::{spawn_job, Backend, CommCounters, Communicator, JobConfig};

use crate::error::{CoreError, Result};
use crate::geometry::Geometry;
use crate::kernels::{dot, spmv, waxpby, waxpby_in_place};
use crate::multigrid::{mg_precondition, MgConfig, MgLevel};
use crate::problem::{generate_problem, DistVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iters: usize,
    /// Stop once `‖r‖ / ‖r₀‖ <= tolerance`.
    pub tolerance: f64,
    pub preconditioned: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { max_iters: 50, tolerance: 0.0, preconditioned: true }
    }
}

/// Nanoseconds spent per phase. Kernel phases exclude the communication
/// they trigger, which is reported under `halo` and `allreduce`, so the
/// phases never overlap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub spmv_ns: u64,
    pub mg_ns: u64,
    pub dot_ns: u64,
    pub waxpby_ns: u64,
    pub halo_ns: u64,
    pub allreduce_ns: u64,
    pub total_ns: u64,
}

impl PhaseTimes {
    pub const NAMES: [&'static str; 6] = ["spmv", "mg", "dot", "waxpby", "halo", "allreduce"];

    pub fn phases(&self) -> [(&'static str, u64); 6] {
        [
            ("spmv", self.spmv_ns),
            ("mg", self.mg_ns),
            ("dot", self.dot_ns),
            ("waxpby", self.waxpby_ns),
            ("halo", self.halo_ns),
            ("allreduce", self.allreduce_ns),
        ]
    }

    pub fn phase_sum(&self) -> u64 {
        self.phases().iter().map(|p| p.1).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub iterations: usize,
    /// `‖r‖₂` before the first iteration and after each one.
    pub residual_history: Vec<f64>,
    pub final_relative_residual: f64,
    /// `‖b - A x‖ / ‖r₀‖` recomputed once after the loop.
    pub explicit_relative_residual: f64,
    pub times: PhaseTimes,
}

#[derive(Clone, Copy)]
enum Phase {
    Spmv,
    Mg,
    Dot,
    Waxpby,
}

struct Timer<'a> {
    comm: &'a Communicator,
    times: PhaseTimes,
}

impl Timer<'_> {
    fn run<T>(&mut self, phase: Phase, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let before: CommCounters = self.comm.counters();
        let start = Instant::now();
        let out = f()?;
        let elapsed = start.elapsed().as_nanos() as u64;
        let d = self.comm.counters() - before;
        let own = elapsed.saturating_sub(d.halo_ns + d.allreduce_ns);
        self.times.halo_ns += d.halo_ns;
        self.times.allreduce_ns += d.allreduce_ns;
        match phase {
            Phase::Spmv => self.times.spmv_ns += own,
            Phase::Mg => self.times.mg_ns += own,
            Phase::Dot => self.times.dot_ns += own,
            Phase::Waxpby => self.times.waxpby_ns += own,
        }
        Ok(out)
    }
}

/// Solves `A x = b` with (optionally multigrid-preconditioned) conjugate
/// gradients, where `A` is the matrix of `level`. `x` holds the initial
/// guess. Collective.
pub fn cg_solve(
    comm: &Communicator,
    level: &mut MgLevel,
    b: &DistVector,
    x: &mut DistVector,
    opts: &CgOptions,
) -> Result<CgResult> {
    let start = Instant::now();
    let mut t = Timer { comm, times: PhaseTimes::default() };
    let mut r = DistVector::zeros(level.matrix.nrows);
    let mut z = level.new_vector();
    let mut p = level.new_vector();
    let mut ap = DistVector::zeros(level.matrix.nrows);

    // r = b - A x
    t.run(Phase::Spmv, || spmv(comm, &level.matrix, &level.plan, x, &mut ap))?;
    t.run(Phase::Waxpby, || {
        waxpby(1.0, b, -1.0, &ap, &mut r);
        Ok(())
    })?;
    let normr0 = t.run(Phase::Dot, || dot(comm, &r, &r))?.sqrt();
    let mut normr = normr0;
    let mut history = vec![normr0];
    let mut rtz = 0.0;
    let mut iterations = 0;

    if normr0 > 0.0 {
        for k in 1..=opts.max_iters {
            if normr / normr0 <= opts.tolerance {
                break;
            }
            if opts.preconditioned {
                t.run(Phase::Mg, || mg_precondition(comm, level, &r, &mut z))?;
            } else {
                t.run(Phase::Waxpby, || {
                    waxpby(1.0, &r, 0.0, &r, &mut z);
                    Ok(())
                })?;
            }
            if k == 1 {
                t.run(Phase::Waxpby, || {
                    waxpby(1.0, &z, 0.0, &z, &mut p);
                    Ok(())
                })?;
                rtz = t.run(Phase::Dot, || dot(comm, &r, &z))?;
            } else {
                let old = rtz;
                rtz = t.run(Phase::Dot, || dot(comm, &r, &z))?;
                let beta = rtz / old;
                t.run(Phase::Waxpby, || {
                    waxpby_in_place(1.0, &z, beta, &mut p);
                    Ok(())
                })?;
            }
            t.run(Phase::Spmv, || spmv(comm, &level.matrix, &level.plan, &mut p, &mut ap))?;
            let pap = t.run(Phase::Dot, || dot(comm, &p, &ap))?;
            if !(pap > 0.0) {
                if pap.is_nan() {
                    return Err(CoreError::NanResidual(k));
                }
                return Err(CoreError::NotSpd(pap, k));
            }
            let alpha = rtz / pap;
            t.run(Phase::Waxpby, || {
                waxpby_in_place(alpha, &p, 1.0, x);
                waxpby_in_place(-alpha, &ap, 1.0, &mut r);
                Ok(())
            })?;
            normr = t.run(Phase::Dot, || dot(comm, &r, &r))?.sqrt();
            if normr.is_nan() {
                return Err(CoreError::NanResidual(k));
            }
            history.push(normr);
            iterations = k;
        }
    }
    let mut times = t.times;
    times.total_ns = start.elapsed().as_nanos() as u64;

    spmv(comm, &level.matrix, &level.plan, x, &mut ap)?;
    waxpby(1.0, b, -1.0, &ap, &mut r);
    let explicit = dot(comm, &r, &r)?.sqrt();
    let relative = |v: f64| if normr0 > 0.0 { v / normr0 } else { 0.0 };

    Ok(CgResult {
        iterations,
        residual_history: history,
        final_relative_residual: relative(normr),
        explicit_relative_residual: relative(explicit),
        times,
    })
}

/// Relative deviation allowed between unpreconditioned residuals at
/// different rank counts.
pub const DISTRIBUTED_RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Allowed ratio of a distributed preconditioned final residual to serial.
pub const PRECONDITIONED_FINAL_FACTOR: f64 = 10.0;
/// Relative residual below which a preconditioned run counts as converged
/// to rounding level. Residuals under this floor are compared as equal and
/// may wobble without breaking monotonicity.
pub const CONVERGED_RELATIVE_FLOOR: f64 = 1e-12;
/// Largest single-step growth of the preconditioned residual still counted
/// as a decreasing history. The 2-norm of the PCG residual is not monotone
/// even in exact arithmetic (CG minimizes the error in the A-norm); small
/// bumps are normal, a real breakdown grows by orders of magnitude.
pub const MONOTONE_STEP_SLACK: f64 = 1.25;

/// Adds `delta` to the diagonal of one global row in runs with `ranks` ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub ranks: usize,
    pub global_row: u64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyRequest {
    pub global_dims: (usize, usize, usize),
    pub ranks: Vec<usize>,
    pub iterations: usize,
    pub backend: Backend,
    pub mg: MgConfig,
    pub perturbation: Option<Perturbation>,
}

impl VerifyRequest {
    pub fn new(global_dims: (usize, usize, usize), ranks: Vec<usize>, iterations: usize) -> Self {
        VerifyRequest {
            global_dims,
            ranks,
            iterations,
            backend: Backend::InProcess,
            mg: MgConfig::default(),
            perturbation: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyEntry {
    pub ranks: usize,
    pub unpreconditioned: Vec<f64>,
    pub preconditioned: Vec<f64>,
    /// Largest relative deviation from the serial unpreconditioned history.
    pub max_relative_deviation: f64,
    /// First iteration (0 = initial residual) exceeding the tolerance.
    pub first_divergent_iteration: Option<usize>,
    pub preconditioned_monotone: bool,
    /// Final preconditioned residual divided by the serial one, both clamped
    /// from below at [`CONVERGED_RELATIVE_FLOOR`] times the initial residual.
    pub preconditioned_final_ratio: f64,
}

impl VerifyEntry {
    pub fn passed(&self) -> bool {
        self.first_divergent_iteration.is_none()
            && self.preconditioned_monotone
            && self.preconditioned_final_ratio <= PRECONDITIONED_FINAL_FACTOR
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub serial_unpreconditioned: Vec<f64>,
    pub serial_preconditioned: Vec<f64>,
    pub entries: Vec<VerifyEntry>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(VerifyEntry::passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            write!(f, "P={:<3} max rel dev {:.3e}", e.ranks, e.max_relative_deviation)?;
            if let Some(k) = e.first_divergent_iteration {
                write!(f, "  DIVERGED at iteration {k}")?;
            }
            if !e.preconditioned_monotone {
                write!(f, "  preconditioned residual not monotone")?;
            }
            if e.preconditioned_final_ratio > PRECONDITIONED_FINAL_FACTOR {
                write!(f, "  preconditioned final {:.2}x serial", e.preconditioned_final_ratio)?;
            }
            writeln!(f, "{}", if e.passed() { "  ok" } else { "" })?;
        }
        Ok(())
    }
}

struct Histories {
    unpreconditioned: Vec<f64>,
    preconditioned: Vec<f64>,
}

fn run_histories(req: &VerifyRequest, ranks: usize, perturb: bool) -> Result<Histories> {
    let (gx, gy, gz) = req.global_dims;
    // fail early, outside the job, on an infeasible split
    Geometry::from_global(ranks, 0, gx, gy, gz)?;
    let job = JobConfig::new(ranks, req.backend);
    let out = spawn_job(&job, |comm| -> Result<Histories> {
        let geom = Geometry::from_global(ranks, comm.rank(), gx, gy, gz)?;
        let problem = generate_problem(&geom);
        let mut level = MgLevel::new(&comm, geom, problem.matrix, &req.mg)?;
        if let (true, Some(p)) = (perturb, req.perturbation) {
            if let Some(i) = level.geometry.local_index_of_global(p.global_row) {
                *level.matrix.diagonal_mut(i) += p.delta;
            }
        }
        let mut histories = Vec::new();
        for preconditioned in [false, true] {
            let mut x = level.new_vector();
            let opts = CgOptions { max_iters: req.iterations, tolerance: 0.0, preconditioned };
            histories.push(cg_solve(&comm, &mut level, &problem.rhs, &mut x, &opts)?.residual_history);
        }
        let preconditioned = histories.pop().unwrap();
        let unpreconditioned = histories.pop().unwrap();
        Ok(Histories { unpreconditioned, preconditioned })
    })
    .map_err(|e| CoreError::Geometry(format!("verification job with {ranks} ranks failed: {e}")))?;
    Ok(out.into_iter().next().unwrap())
}

/// Runs CG at each rank count on the same global problem and compares the
/// residual histories with a serial run.
pub fn verify_against_serial(req: &VerifyRequest) -> Result<VerifyReport> {
    let serial = run_histories(req, 1, false)?;
    let mut entries = Vec::new();
    for &ranks in &req.ranks {
        let perturb = req.perturbation.is_some_and(|p| p.ranks == ranks);
        let h = run_histories(req, ranks, perturb)?;
        let mut max_dev: f64 = 0.0;
        let mut first = None;
        for (k, (a, b)) in h.unpreconditioned.iter().zip(&serial.unpreconditioned).enumerate() {
            let dev = if *b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
            max_dev = max_dev.max(dev);
            if first.is_none() && !(dev <= DISTRIBUTED_RESIDUAL_TOLERANCE) {
                first = Some(k);
            }
        }
        if first.is_none() && h.unpreconditioned.len() != serial.unpreconditioned.len() {
            first = Some(h.unpreconditioned.len().min(serial.unpreconditioned.len()));
        }
        let floor = CONVERGED_RELATIVE_FLOOR * serial.preconditioned[0];
        let monotone = h.preconditioned.windows(2).all(|w| w[1] <= w[0] * MONOTONE_STEP_SLACK || w[1] <= floor);
        let serial_final = serial.preconditioned.last().unwrap().max(floor);
        let final_p = h.preconditioned.last().unwrap().max(floor);
        let ratio = if serial_final > 0.0 { final_p / serial_final } else if final_p == 0.0 { 1.0 } else { f64::INFINITY };
        entries.push(VerifyEntry {
            ranks,
            unpreconditioned: h.unpreconditioned,
            preconditioned: h.preconditioned,
            max_relative_deviation: max_dev,
            first_divergent_iteration: first,
            preconditioned_monotone: monotone,
            preconditioned_final_ratio: ratio,
        });
    }
    Ok(VerifyReport {
        serial_unpreconditioned: serial.unpreconditioned,
        serial_preconditioned: serial.preconditioned,
        entries,
    })
}
