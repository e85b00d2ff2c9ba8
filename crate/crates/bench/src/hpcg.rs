//! Timing and verification runs of the conjugate-gradient solver.

use std::path::Path;
use std::time::Instant;

use mhb_comm::{Backend, Communicator};
use mhb_core::geometry::check_benchmark_dim;
use mhb_core::{
    cg_solve, factor_process_grid, generate_problem, verify_against_serial, CgOptions, Geometry, MgConfig, MgLevel,
    PhaseTimes, VerifyReport, VerifyRequest,
};

use crate::error::{BenchError, Result};
use crate::harness::{run_measured_trials, TrialConfig, TrialSeries};
use crate::launch::{run_job, Launch};

pub const SWEEP_SIZES: [usize; 3] = [16, 32, 64];
pub const SWEEP_RANKS: [usize; 4] = [1, 2, 4, 8];
pub const TIMING_ITERS: usize = 1;
pub const VERIFY_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpcgConfig {
    /// Per-rank grid.
    pub local: (usize, usize, usize),
    pub iters: usize,
    pub mg: MgConfig,
}

impl HpcgConfig {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        HpcgConfig { local: (nx, ny, nz), iters: TIMING_ITERS, mg: MgConfig::default() }
    }

    /// The benchmark's dimension rule: each local dimension at least 16 and
    /// a multiple of 8.
    pub fn check_dims(&self) -> Result<()> {
        let (nx, ny, nz) = self.local;
        for n in [nx, ny, nz] {
            check_benchmark_dim(n)?;
        }
        Ok(())
    }
}

/// Times `iters` preconditioned CG iterations per trial on every rank.
/// Setup (problem generation, halo and multigrid construction) is outside
/// the timed region and the initial guess is reset between trials. Rank 0
/// returns the series with the per-phase breakdown. Collective.
pub fn hpcg_timing(comm: &Communicator, cfg: &HpcgConfig, trials: &TrialConfig) -> Result<Option<TrialSeries>> {
    let (nx, ny, nz) = cfg.local;
    let geom = Geometry::new(comm.size(), comm.rank(), nx, ny, nz)?;
    let (px, py, pz) = (geom.px, geom.py, geom.pz);
    let problem = generate_problem(&geom);
    let mut level = MgLevel::new(comm, geom, problem.matrix, &cfg.mg)?;
    let depth = level.depth();
    let mut x = level.new_vector();
    let opts = CgOptions { max_iters: cfg.iters, tolerance: 0.0, preconditioned: true };
    let mut phases = PhaseTimes::default();

    let samples = run_measured_trials(trials, |trial| {
        x.fill(0.0);
        comm.barrier()?;
        let start = Instant::now();
        let res = cg_solve(comm, &mut level, &problem.rhs, &mut x, &opts)?;
        let ns = start.elapsed().as_nanos() as u64;
        if !(res.final_relative_residual < 1.0) {
            return Err(BenchError::Integrity(format!(
                "residual did not decrease: relative residual {} after {} iterations",
                res.final_relative_residual, res.iterations
            )));
        }
        if trial >= trials.warmup {
            let t = res.times;
            phases.spmv_ns += t.spmv_ns;
            phases.mg_ns += t.mg_ns;
            phases.dot_ns += t.dot_ns;
            phases.waxpby_ns += t.waxpby_ns;
            phases.halo_ns += t.halo_ns;
            phases.allreduce_ns += t.allreduce_ns;
            phases.total_ns += t.total_ns;
        }
        Ok(ns.max(1))
    })?;

    if comm.rank() != 0 {
        return Ok(None);
    }
    let series = TrialSeries::new("hpcg")
        .param("nx", nx)
        .param("ny", ny)
        .param("nz", nz)
        .param("np", comm.size())
        .param("grid", format!("{px}x{py}x{pz}"))
        .param("iters", cfg.iters)
        .param("levels", depth)
        .param("backend", comm.backend())
        .samples(samples)
        .breakdown(phases.phases().iter().map(|(n, v)| (n.to_string(), *v)).collect());
    Ok(Some(series))
}

/// Timing run at one rank count.
pub fn run_hpcg_timing(cfg: &HpcgConfig, ranks: usize, launch: &Launch, trials: &TrialConfig) -> Result<Option<TrialSeries>> {
    run_job(ranks, launch, |comm| hpcg_timing(comm, cfg, trials))
}

/// Timing runs over every (local size, rank count) pair, sizes outermost.
pub fn hpcg_sweep(
    sizes: &[usize],
    ranks: &[usize],
    base: &HpcgConfig,
    backend: Backend,
    trials: &TrialConfig,
) -> Result<Vec<TrialSeries>> {
    let mut out = Vec::new();
    for &n in sizes {
        for &p in ranks {
            let cfg = HpcgConfig { local: (n, n, n), ..base.clone() };
            log::info!("hpcg sweep: local {n}^3 on {p} ranks");
            if let Some(s) = run_hpcg_timing(&cfg, p, &Launch::Local(backend), trials)? {
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// Global grid whose decomposition over `max(ranks)` gives `local` per rank.
pub fn verify_global_dims(local: (usize, usize, usize), ranks: &[usize]) -> (usize, usize, usize) {
    let p = ranks.iter().copied().max().unwrap_or(1);
    let (px, py, pz) = factor_process_grid(p);
    (local.0 * px, local.1 * py, local.2 * pz)
}

/// Compares residual histories at each rank count against a serial run on
/// the same global problem.
pub fn run_hpcg_verify(cfg: &HpcgConfig, ranks: &[usize], backend: Backend) -> Result<VerifyReport> {
    let global = verify_global_dims(cfg.local, ranks);
    let mut req = VerifyRequest::new(global, ranks.to_vec(), cfg.iters);
    req.backend = backend;
    req.mg = cfg.mg;
    Ok(verify_against_serial(&req)?)
}

/// Writes per-iteration residuals of a verification report as
/// `ranks,iteration,residual,serial_residual,relative_deviation,preconditioned,serial_preconditioned`.
pub fn write_verify_csv(path: &Path, report: &VerifyReport) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| BenchError::Io { path: dir.to_path_buf(), source })?;
    }
    let csv_err = |source| BenchError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    w.write_record([
        "ranks",
        "iteration",
        "residual",
        "serial_residual",
        "relative_deviation",
        "preconditioned",
        "serial_preconditioned",
    ])
    .map_err(csv_err)?;
    let cell = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &report.entries {
        let n = e.unpreconditioned.len().max(e.preconditioned.len());
        for k in 0..n {
            let a = e.unpreconditioned.get(k);
            let b = report.serial_unpreconditioned.get(k);
            let dev = match (a, b) {
                (Some(a), Some(b)) if *b != 0.0 => Some((a - b).abs() / b.abs()),
                (Some(a), Some(b)) => Some((a - b).abs()),
                _ => None,
            };
            w.write_record([
                e.ranks.to_string(),
                k.to_string(),
                cell(a),
                cell(b),
                cell(dev.as_ref()),
                cell(e.preconditioned.get(k)),
                cell(report.serial_preconditioned.get(k)),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| BenchError::Io { path: path.to_path_buf(), source })
}
