//! Command-line driver for every benchmark.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mhb_comm::{Backend, ENV_COORDINATOR, ENV_RANK, ENV_SIZE};

use crate::bsp::{bsp_run, BspConfig};
use crate::error::{BenchError, Result};
use crate::harness::{write_csv, TrialConfig, TrialSeries};
use crate::hpcg::{
    hpcg_sweep, run_hpcg_timing, run_hpcg_verify, write_verify_csv, HpcgConfig, SWEEP_RANKS, SWEEP_SIZES,
    VERIFY_ITERS,
};
use crate::launch::{run_job, Launch};
use crate::micro::{micro_run, MicroKind, MicroParams};
use crate::pingpong::{pingpong_run, pingpong_sizes, DEFAULT_MAX_BYTES};

#[derive(Debug, Parser)]
#[command(name = "mhb", version, about = "Distributed solver and messaging benchmarks")]
pub struct Cli {
    /// Measured trials per configuration.
    #[arg(long, global = true, default_value_t = 100)]
    pub trials: usize,
    /// Leading trials run and discarded.
    #[arg(long, global = true, default_value_t = 10)]
    pub warmup: usize,
    /// Tukey fence multiplier for outlier removal.
    #[arg(long = "tukey-k", global = true, default_value_t = 1.5)]
    pub tukey_k: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Inproc,
    Tcp,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Inproc => Backend::InProcess,
            BackendArg::Tcp => Backend::Tcp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HpcgMode {
    Timing,
    Verify,
}

/// Placement of this process inside an externally launched TCP job. When a
/// rank is given, this process runs only that rank.
#[derive(Debug, Clone, Args)]
pub struct ExternalArgs {
    /// This process's rank in a multi-process TCP job.
    #[arg(long, env = ENV_RANK)]
    pub rank: Option<usize>,
    /// Address (host:port) rank 0 listens on.
    #[arg(long, env = ENV_COORDINATOR)]
    pub coordinator: Option<SocketAddr>,
    /// Job size; must agree with --np when both are given.
    #[arg(long = "world-size", env = ENV_SIZE)]
    pub world_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Conjugate-gradient solver timing sweep or distributed verification.
    Hpcg {
        #[arg(long, default_value_t = 16)]
        nx: usize,
        #[arg(long, default_value_t = 16)]
        ny: usize,
        #[arg(long, default_value_t = 16)]
        nz: usize,
        /// Rank counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        np: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = BackendArg::Inproc)]
        backend: BackendArg,
        /// CG iterations (default 1 for timing, 50 for verify).
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, value_enum, default_value_t = HpcgMode::Timing)]
        mode: HpcgMode,
        /// Run local sizes 16, 32 and 64 (cubed) at every rank count.
        #[arg(long)]
        sweep: bool,
        /// Multigrid levels including the finest.
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        external: ExternalArgs,
    },
    /// Bulk-synchronous ring of compute and neighbour exchange.
    Bsp {
        #[arg(long, value_delimiter = ',', default_value = "4")]
        np: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,100")]
        steps: Vec<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        reads: usize,
        #[arg(long, default_value_t = 1_000_000)]
        writes: usize,
        #[arg(long, value_delimiter = ',', default_value = "1000000")]
        flops: Vec<usize>,
        #[arg(long = "array-bytes", default_value_t = 8 << 20)]
        array_bytes: usize,
        #[arg(long = "msg-bytes", default_value_t = 64 << 10)]
        msg_bytes: usize,
        /// Forward received payloads so each token circles the ring.
        #[arg(long)]
        forward: bool,
        #[arg(long, value_enum, default_value_t = BackendArg::Inproc)]
        backend: BackendArg,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        external: ExternalArgs,
    },
    /// Two-rank round-trip latency over message sizes 1 B .. max.
    Pingpong {
        #[arg(long, value_enum, default_value_t = BackendArg::Inproc)]
        backend: BackendArg,
        #[arg(long = "max-bytes", default_value_t = DEFAULT_MAX_BYTES)]
        max_bytes: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        external: ExternalArgs,
    },
    /// In-process queue, notification, task and initialization latencies.
    Micro {
        #[arg(long, value_enum)]
        kind: MicroKind,
        #[arg(long = "ops-per-sample", default_value_t = 1000)]
        ops_per_sample: usize,
        #[arg(long = "fib-n", default_value_t = 20)]
        fib_n: u32,
        /// Worker count (default 1 for spawn, 4 for parinit).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long = "array-bytes", default_value_t = 50_000_000)]
        array_bytes: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn launch_for(backend: BackendArg, external: &ExternalArgs, np: usize) -> Result<Launch> {
    let Some(rank) = external.rank else {
        return Ok(Launch::Local(backend.into()));
    };
    if backend != BackendArg::Tcp {
        return Err(BenchError::Config("--rank is only meaningful with --backend tcp".into()));
    }
    let size = external.world_size.unwrap_or(np);
    if size != np {
        return Err(BenchError::Config(format!("world size {size} disagrees with --np {np}")));
    }
    if rank >= size {
        return Err(BenchError::Config(format!("rank {rank} out of range for {size} ranks")));
    }
    let coordinator = external
        .coordinator
        .ok_or_else(|| BenchError::Config(format!("--coordinator (or {ENV_COORDINATOR}) is required with --rank")))?;
    Ok(Launch::External { rank, size, coordinator })
}

fn single_np(np: &[usize], external: &ExternalArgs) -> Result<()> {
    if external.rank.is_some() && np.len() != 1 {
        return Err(BenchError::Config("an externally launched rank takes a single --np value".into()));
    }
    Ok(())
}

fn emit(series: &[TrialSeries], name: &str, csv: Option<&Path>, k: f64, out: &mut dyn Write) -> Result<()> {
    if series.is_empty() {
        return Ok(());
    }
    let stats: Vec<_> = match csv {
        Some(dir) => {
            let (paths, stats) = write_csv(dir, name, series, k)?;
            log::info!("wrote {} and {}", paths.raw.display(), paths.summary.display());
            stats
        }
        None => series.iter().map(|s| s.stats(k)).collect::<std::result::Result<_, _>>()?,
    };
    let io = |source| BenchError::Io { path: PathBuf::from("<stdout>"), source };
    for (s, st) in series.iter().zip(&stats) {
        write!(
            out,
            "{:<12} {:<60} kept {:>4}/{:<4} mean {:>14.1} ns  median {:>14.1} ns  std {:>12.1}",
            s.benchmark,
            s.params_string(),
            st.n_kept,
            st.n_raw,
            st.mean,
            st.median,
            st.std
        )
        .map_err(io)?;
        if let Some(h) = st.harmonic_mean_throughput {
            write!(out, "  hmean {:.3e} B/s", h).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}

/// Runs a parsed command line, printing a summary to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let trials = TrialConfig { trials: cli.trials, warmup: cli.warmup, tukey_k: cli.tukey_k };
    trials.validate()?;
    let k = cli.tukey_k;
    let io = |source| BenchError::Io { path: PathBuf::from("<stdout>"), source };

    match &cli.command {
        Command::Hpcg { nx, ny, nz, np, backend, iters, mode, sweep, levels, csv, external } => {
            let mut cfg = HpcgConfig::new(*nx, *ny, *nz);
            cfg.mg.levels = *levels;
            match mode {
                HpcgMode::Timing => {
                    cfg.iters = iters.unwrap_or(crate::hpcg::TIMING_ITERS);
                    if *sweep {
                        if external.rank.is_some() {
                            return Err(BenchError::Config("--sweep runs all ranks locally".into()));
                        }
                        let ranks = np.clone().unwrap_or_else(|| SWEEP_RANKS.to_vec());
                        let series = hpcg_sweep(&SWEEP_SIZES, &ranks, &cfg, (*backend).into(), &trials)?;
                        emit(&series, "hpcg", csv.as_deref(), k, out)
                    } else {
                        cfg.check_dims()?;
                        let ranks = np.clone().unwrap_or_else(|| vec![1]);
                        single_np(&ranks, external)?;
                        let mut series = Vec::new();
                        for &p in &ranks {
                            let launch = launch_for(*backend, external, p)?;
                            series.extend(run_hpcg_timing(&cfg, p, &launch, &trials)?);
                        }
                        emit(&series, "hpcg", csv.as_deref(), k, out)
                    }
                }
                HpcgMode::Verify => {
                    if external.rank.is_some() {
                        return Err(BenchError::Config("verify mode runs all ranks locally".into()));
                    }
                    cfg.check_dims()?;
                    cfg.iters = iters.unwrap_or(VERIFY_ITERS);
                    let ranks = np.clone().unwrap_or_else(|| SWEEP_RANKS.to_vec());
                    let report = run_hpcg_verify(&cfg, &ranks, (*backend).into())?;
                    write!(out, "{report}").map_err(io)?;
                    if let Some(dir) = csv {
                        write_verify_csv(&dir.join("hpcg_verify.csv"), &report)?;
                    }
                    if report.passed() {
                        Ok(())
                    } else {
                        Err(BenchError::Integrity("distributed residuals diverge from the serial run".into()))
                    }
                }
            }
        }
        Command::Bsp { np, steps, reads, writes, flops, array_bytes, msg_bytes, forward, backend, csv, external } => {
            single_np(np, external)?;
            let mut series = Vec::new();
            let mut checksums = Vec::new();
            for &p in np {
                let launch = launch_for(*backend, external, p)?;
                for &st in steps {
                    for &fl in flops {
                        let cfg = BspConfig {
                            steps: st,
                            reads: *reads,
                            writes: *writes,
                            flops: fl,
                            array_bytes: *array_bytes,
                            msg_bytes: *msg_bytes,
                            forward: *forward,
                        };
                        if let Some(o) = run_job(p, &launch, |comm| bsp_run(comm, &cfg, &trials))? {
                            checksums.push(o.checksum);
                            series.push(o.series);
                        }
                    }
                }
            }
            emit(&series, "bsp", csv.as_deref(), k, out)?;
            if !checksums.is_empty() {
                writeln!(out, "checksum {}", checksums.iter().sum::<f64>()).map_err(io)?;
            }
            Ok(())
        }
        Command::Pingpong { backend, max_bytes, csv, external } => {
            let launch = launch_for(*backend, external, 2)?;
            let sizes = pingpong_sizes(*max_bytes);
            if let Some(report) = run_job(2, &launch, |comm| pingpong_run(comm, &sizes, &trials))? {
                emit(&report.series, "pingpong", csv.as_deref(), k, out)?;
                writeln!(out, "harmonic mean one-way throughput {:.3e} B/s", report.harmonic_mean_throughput)
                    .map_err(io)?;
            }
            Ok(())
        }
        Command::Micro { kind, ops_per_sample, fib_n, workers, array_bytes, csv } => {
            let mut params = MicroParams {
                ops_per_sample: *ops_per_sample,
                fib_n: *fib_n,
                array_bytes: *array_bytes,
                ..MicroParams::default()
            };
            if let Some(w) = workers {
                params.spawn_workers = *w;
                params.parinit_workers = *w;
            }
            let series = micro_run(*kind, &params, &trials)?;
            let name = format!("micro_{}", kind.to_possible_value().expect("named kind").get_name());
            emit(&series, &name, csv.as_deref(), k, out)
        }
    }
}
