mod common;

use common::{dense, oracle_matrix, run_ranks};
use mhb_core::solver::Perturbation;
use mhb_core::{
    cg_solve, generate_problem, verify_against_serial, CgOptions, CoreError, CsrMatrix, DistVector, Geometry,
    HaloPlan, MgConfig, MgLevel, VerifyRequest,
};

fn serial_level(comm: &mhb_comm::Communicator, n: usize) -> Result<(MgLevel, DistVector), CoreError> {
    let g = Geometry::new(1, 0, n, n, n)?;
    let p = generate_problem(&g);
    Ok((MgLevel::new(comm, g, p.matrix, &MgConfig::default())?, p.rhs))
}

#[test]
fn zero_rhs_takes_no_iterations() {
    run_ranks(1, |comm| {
        let (mut level, _) = serial_level(&comm, 8)?;
        let b = DistVector::zeros(level.matrix.nrows);
        let mut x = level.new_vector();
        let res = cg_solve(&comm, &mut level, &b, &mut x, &CgOptions::default())?;
        assert_eq!(res.iterations, 0);
        assert_eq!(res.residual_history, vec![0.0]);
        assert_eq!(res.final_relative_residual, 0.0);
        Ok(())
    });
}

#[test]
fn diagonal_system_converges_in_one_step() {
    let m = CsrMatrix::from_rows(&[vec![(0, 26.0)], vec![(1, 26.0)]]).unwrap();
    let g = Geometry::new(1, 0, 2, 1, 1).unwrap();
    run_ranks(1, |comm| {
        let mut level = MgLevel::from_parts(g.clone(), m.clone(), HaloPlan::local_only(2));
        let b = DistVector::from_owned(vec![26.0, 52.0]);
        let mut x = DistVector::zeros(2);
        let opts = CgOptions { max_iters: 10, tolerance: 0.0, preconditioned: false };
        let res = cg_solve(&comm, &mut level, &b, &mut x, &opts)?;
        assert_eq!(x.owned(), &[1.0, 2.0]);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.residual_history.len(), 2);
        Ok(())
    });
}

#[test]
fn indefinite_matrix_is_reported() {
    let m = CsrMatrix::from_rows(&[vec![(0, -2.0)]]).unwrap();
    let g = Geometry::new(1, 0, 1, 1, 1).unwrap();
    let err = mhb_comm::spawn_job(&mhb_comm::JobConfig::new(1, mhb_comm::Backend::InProcess), |comm| {
        let mut level = MgLevel::from_parts(g.clone(), m.clone(), HaloPlan::local_only(1));
        let b = DistVector::from_owned(vec![1.0]);
        let mut x = DistVector::zeros(1);
        let opts = CgOptions { max_iters: 5, tolerance: 0.0, preconditioned: false };
        cg_solve(&comm, &mut level, &b, &mut x, &opts).map(|_| ())
    })
    .unwrap_err();
    assert!(err.to_string().contains("not SPD"), "{err}");
}

#[test]
fn all_ones_is_the_direct_solution() {
    // dense direct solve of the assembled 8^3 system
    let a = dense(&oracle_matrix(8, 8, 8), 512);
    let g = Geometry::new(1, 0, 8, 8, 8).unwrap();
    let b = nalgebra::DVector::from_column_slice(generate_problem(&g).rhs.owned());
    let x = a.lu().solve(&b).unwrap();
    assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn preconditioned_solve_recovers_ones() {
    run_ranks(1, |comm| {
        let (mut level, b) = serial_level(&comm, 16)?;
        let mut x = level.new_vector();
        let opts = CgOptions { max_iters: 50, tolerance: 1e-9, preconditioned: true };
        let res = cg_solve(&comm, &mut level, &b, &mut x, &opts)?;
        let err = x.owned().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "inf-norm error {err}");
        assert!(res.iterations < 50);
        assert_eq!(res.residual_history.len(), res.iterations + 1);
        assert!(res.explicit_relative_residual < 1e-8);
        Ok(())
    });
}

#[test]
fn unpreconditioned_residual_drops_within_fifty_iterations() {
    for n in [16, 32] {
        run_ranks(1, |comm| {
            let (mut level, b) = serial_level(&comm, n)?;
            let mut x = level.new_vector();
            let opts = CgOptions { max_iters: 50, tolerance: 0.0, preconditioned: false };
            let res = cg_solve(&comm, &mut level, &b, &mut x, &opts)?;
            let r0 = res.residual_history[0];
            assert!(res.residual_history[1..].iter().any(|&r| r < r0));
            Ok(())
        });
    }
}

#[test]
fn preconditioning_wins_at_fifty_iterations_on_32_cubed() {
    let out = run_ranks(1, |comm| {
        let (mut level, b) = serial_level(&comm, 32)?;
        let mut finals = Vec::new();
        for preconditioned in [true, false] {
            let mut x = level.new_vector();
            let opts = CgOptions { max_iters: 50, tolerance: 0.0, preconditioned };
            finals.push(cg_solve(&comm, &mut level, &b, &mut x, &opts)?.final_relative_residual);
        }
        Ok(finals)
    });
    assert!(out[0][0] <= out[0][1], "{:?}", out[0]);
}

#[test]
fn phase_breakdown_fits_in_total() {
    let out = run_ranks(4, |comm| {
        let g = Geometry::new(4, comm.rank(), 16, 16, 16)?;
        let p = generate_problem(&g);
        let mut level = MgLevel::new(&comm, g, p.matrix, &MgConfig::default())?;
        let mut x = level.new_vector();
        let opts = CgOptions { max_iters: 3, tolerance: 0.0, preconditioned: true };
        cg_solve(&comm, &mut level, &p.rhs, &mut x, &opts)
    });
    for res in out {
        let t = res.times;
        assert!(t.phase_sum() <= t.total_ns);
        assert!(t.spmv_ns > 0 && t.mg_ns > 0 && t.halo_ns > 0 && t.allreduce_ns > 0);
    }
}

#[test]
fn verify_serial_against_itself_is_exact() {
    let report = verify_against_serial(&VerifyRequest::new((16, 16, 16), vec![1], 10)).unwrap();
    let e = &report.entries[0];
    assert_eq!(e.max_relative_deviation, 0.0);
    assert_eq!(e.unpreconditioned, report.serial_unpreconditioned);
    assert!(report.passed());
}

#[test]
fn verify_two_ranks_within_tolerance() {
    let report = verify_against_serial(&VerifyRequest::new((32, 16, 16), vec![1, 2], 10)).unwrap();
    assert!(report.passed(), "{report}");
    assert!(report.entries[1].max_relative_deviation <= 1e-8);
    assert_eq!(report.entries[1].unpreconditioned.len(), 11);
}

#[test]
fn verify_flags_injected_perturbation() {
    let mut req = VerifyRequest::new((32, 16, 16), vec![2], 10);
    req.perturbation = Some(Perturbation { ranks: 2, global_row: 1000, delta: 1e-3 });
    let report = verify_against_serial(&req).unwrap();
    let e = &report.entries[0];
    assert!(!report.passed());
    let k = e.first_divergent_iteration.expect("divergence flagged");
    // the initial residual is b with x = 0 and does not see the matrix
    assert!(k >= 1, "{k}");
    assert!(report.to_string().contains(&format!("DIVERGED at iteration {k}")));
}

#[test]
fn verify_rejects_infeasible_split() {
    assert!(verify_against_serial(&VerifyRequest::new((16, 16, 16), vec![3], 2)).is_err());
}
