use mhb_bench::bsp::{bsp_run, make_payload, rotate_tokens, BspConfig, STEP_TAG};
use mhb_bench::harness::{harmonic_mean, TrialConfig};
use mhb_bench::micro::{micro_run, MicroKind, MicroParams};
use mhb_bench::pingpong::{pingpong_run, PingPongReport};
use mhb_comm::{spawn_job, Backend, JobConfig};

const BACKENDS: [Backend; 2] = [Backend::InProcess, Backend::Tcp];

fn few(trials: usize) -> TrialConfig {
    TrialConfig::new(trials, 1)
}

fn small_bsp() -> BspConfig {
    BspConfig { steps: 3, reads: 10_000, writes: 10_000, flops: 10_000, array_bytes: 1 << 16, msg_bytes: 256, forward: false }
}

fn median(v: &[u64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    }
}

#[test]
fn token_rotation_returns_own_payload() {
    for backend in BACKENDS {
        for p in [2, 4, 8] {
            let held = spawn_job(&JobConfig::new(p, backend), |comm| rotate_tokens(&comm, p, 100)).unwrap();
            for (r, h) in held.iter().enumerate() {
                assert_eq!(h, &make_payload(0, r as u32, 100), "{backend} P={p} rank {r}");
            }
        }
    }
}

#[test]
fn one_step_delivers_backward_neighbours_token() {
    let held = spawn_job(&JobConfig::new(4, Backend::InProcess), |comm| rotate_tokens(&comm, 1, 64)).unwrap();
    for (r, h) in held.iter().enumerate() {
        assert_eq!(h, &make_payload(0, ((r + 3) % 4) as u32, 64));
    }
}

#[test]
fn single_rank_ring_measures_comm() {
    let out = spawn_job(&JobConfig::new(1, Backend::InProcess), |comm| bsp_run(&comm, &small_bsp(), &few(3))).unwrap();
    let o = out[0].as_ref().unwrap();
    assert_eq!(o.series.samples.len(), 3);
    assert!(o.checksum.is_finite());
    let bd = o.series.breakdown.as_ref().unwrap();
    assert_eq!(bd.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), ["read", "write", "flop", "comm"]);
    assert!(bd[3].1 > 0);
}

#[test]
fn breakdown_fits_inside_total() {
    for backend in BACKENDS {
        let out = spawn_job(&JobConfig::new(4, backend), |comm| bsp_run(&comm, &small_bsp(), &few(4))).unwrap();
        assert!(out[1..].iter().all(Option::is_none));
        let s = &out[0].as_ref().unwrap().series;
        let ops: u64 = s.breakdown.as_ref().unwrap().iter().map(|(_, v)| v).sum();
        assert!(ops as f64 / s.total_ns() as f64 <= 1.0);
    }
}

#[test]
fn forwarding_mode_checks_every_hop() {
    let cfg = BspConfig { steps: 8, forward: true, ..small_bsp() };
    let out = spawn_job(&JobConfig::new(4, Backend::Tcp), |comm| bsp_run(&comm, &cfg, &few(2))).unwrap();
    assert!(out[0].is_some());
}

#[test]
fn corrupted_ring_message_fails_integrity() {
    let err = spawn_job(&JobConfig::new(2, Backend::InProcess), |comm| {
        if comm.rank() == 1 {
            comm.send(0, STEP_TAG, &make_payload(99, 1, 256))?;
        }
        bsp_run(&comm, &small_bsp(), &few(1)).map(|_| ())
    })
    .unwrap_err();
    assert_eq!(err.rank(), Some(0));
    assert!(err.to_string().contains("integrity"), "{err}");
    assert!(err.to_string().contains("step 99"), "{err}");
}

// A self-ring, so that "comm" is message cost only and not time spent
// waiting for a neighbour that shares the core.
#[test]
fn more_flops_raise_compute_share() {
    let share = |flops: usize| {
        let cfg = BspConfig { steps: 5, reads: 0, writes: 0, flops, array_bytes: 4096, msg_bytes: 64 << 10, forward: false };
        let out = spawn_job(&JobConfig::new(1, Backend::InProcess), |comm| bsp_run(&comm, &cfg, &few(5))).unwrap();
        let bd = out[0].as_ref().unwrap().series.breakdown.clone().unwrap();
        let compute: u64 = bd[..3].iter().map(|(_, v)| v).sum();
        compute as f64 / (compute + bd[3].1) as f64
    };
    let (a, b) = (share(1_000_000), share(2_000_000));
    assert!(b > a, "compute share {a} -> {b}");
}

#[test]
fn rejects_empty_messages() {
    let cfg = BspConfig { msg_bytes: 0, ..small_bsp() };
    let err = spawn_job(&JobConfig::new(1, Backend::InProcess), |comm| bsp_run(&comm, &cfg, &few(1))).unwrap_err();
    assert!(err.to_string().contains("at least one byte"));
}

#[test]
fn tiny_messages_still_ring() {
    let cfg = BspConfig { msg_bytes: 1, ..small_bsp() };
    spawn_job(&JobConfig::new(3, Backend::InProcess), |comm| bsp_run(&comm, &cfg, &few(1))).unwrap();
}

fn pingpong(backend: Backend, sizes: &[usize], trials: usize) -> PingPongReport {
    let out = spawn_job(&JobConfig::new(2, backend), |comm| pingpong_run(&comm, sizes, &few(trials))).unwrap();
    assert!(out[1].is_none());
    out.into_iter().next().unwrap().unwrap()
}

#[test]
fn one_byte_round_trip() {
    for backend in BACKENDS {
        let r = pingpong(backend, &[1], 5);
        assert!(r.series[0].samples.iter().all(|&s| s > 0));
        assert_eq!(r.series[0].throughput_bytes, Some(2));
    }
}

#[test]
fn larger_messages_take_longer() {
    for backend in BACKENDS {
        let r = pingpong(backend, &[1024, 1 << 20], 10);
        let (small, big) = (median(&r.series[0].samples), median(&r.series[1].samples));
        assert!(big >= 0.5 * small, "{backend}: 1 MiB {big} ns vs 1 KiB {small} ns");
    }
}

#[test]
fn cross_size_throughput_is_harmonic() {
    let r = pingpong(Backend::InProcess, &[64, 4096, 65536], 5);
    // one-way throughput from the mean round trip: size / (rtt / 2)
    let expect: Vec<f64> = r
        .series
        .iter()
        .zip([64.0, 4096.0, 65536.0])
        .map(|(s, size)| {
            let mean = s.samples.iter().sum::<u64>() as f64 / s.samples.len() as f64;
            size / (mean / 2.0 / 1e9)
        })
        .collect();
    for (a, b) in r.throughputs.iter().zip(&expect) {
        assert!((a - b).abs() <= 1e-9 * b);
    }
    let h = 3.0 / expect.iter().map(|t| 1.0 / t).sum::<f64>();
    assert!((r.harmonic_mean_throughput - h).abs() <= 1e-9 * h);
    assert_eq!(harmonic_mean(&[1e9, 3e9]), Some(1.5e9));
}

#[test]
fn pingpong_needs_two_ranks() {
    let err = spawn_job(&JobConfig::new(3, Backend::InProcess), |comm| pingpong_run(&comm, &[1], &few(1)).map(|_| ()))
        .unwrap_err();
    assert!(err.to_string().contains("exactly 2 ranks"), "{err}");
}

fn micro(kind: MicroKind, params: &MicroParams, trials: usize) -> Vec<mhb_bench::harness::TrialSeries> {
    micro_run(kind, params, &TrialConfig::new(trials, 2)).unwrap()
}

#[test]
fn fib_task_slower_than_null_task() {
    let s = micro(MicroKind::Spawn, &MicroParams::default(), 20);
    assert_eq!(s[0].get_param("task"), Some("null"));
    assert_eq!(s[1].get_param("task"), Some("fib20"));
    assert!(median(&s[1].samples) >= median(&s[0].samples));
}

#[test]
fn parinit_single_worker_matches_sequential() {
    let params = MicroParams { parinit_workers: 1, ..MicroParams::default() };
    let s = micro(MicroKind::ParInit, &params, 15);
    let ratio = median(&s[0].samples) / median(&s[1].samples);
    assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn notify_slower_than_enqueue() {
    let put = micro(MicroKind::ChannelOps, &MicroParams::default(), 20)
        .into_iter()
        .find(|s| s.get_param("op") == Some("put"))
        .unwrap();
    let notify = micro(MicroKind::Notify, &MicroParams::default(), 50);
    assert_eq!(notify[0].samples.len(), 50);
    assert!(median(&notify[0].samples) > median(&put.samples));
}

#[test]
fn channel_ops_reports_each_operation() {
    let s = micro(MicroKind::ChannelOps, &MicroParams { ops_per_sample: 64, ..MicroParams::default() }, 7);
    let ops: Vec<_> = s.iter().map(|s| s.get_param("op").unwrap()).collect();
    assert_eq!(ops, ["put", "fetch", "take"]);
    assert!(s.iter().all(|s| s.samples.len() == 7));
}

#[test]
fn zero_workers_rejected() {
    let p = MicroParams { spawn_workers: 0, ..MicroParams::default() };
    assert!(micro_run(MicroKind::Spawn, &p, &TrialConfig::new(1, 0)).is_err());
}
