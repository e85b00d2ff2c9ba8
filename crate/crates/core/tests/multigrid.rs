mod common;

use common::run_ranks;
use mhb_comm::Communicator;
use mhb_core::kernels::dot_local;
use mhb_core::{
    cg_solve, generate_problem, mg_precondition, prolong_add, restrict_residual, symgs, CgOptions, CoreError,
    DistVector, Geometry, MgConfig, MgLevel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn build(comm: &Communicator, n: (usize, usize, usize), levels: usize) -> Result<MgLevel, CoreError> {
    let g = Geometry::from_global(comm.size(), comm.rank(), n.0, n.1, n.2)?;
    let p = generate_problem(&g);
    MgLevel::new(comm, g, p.matrix, &MgConfig { levels, ..MgConfig::default() })
}

#[test]
fn hierarchy_depth() {
    run_ranks(1, |comm| {
        let l = build(&comm, (16, 16, 16), 4)?;
        assert_eq!(l.depth(), 4);
        let coarsest = l.coarser.as_ref().unwrap().coarser.as_ref().unwrap().coarser.as_ref().unwrap();
        assert_eq!((coarsest.geometry.nx, coarsest.matrix.nrows), (2, 8));
        // 8x8x4 -> 4x4x2 -> 2x2x1, then z is odd
        assert_eq!(build(&comm, (8, 8, 4), 4)?.depth(), 3);
        assert_eq!(build(&comm, (6, 6, 6), 4)?.depth(), 2);
        Ok(())
    });
}

#[test]
fn depth_one_is_a_single_symgs() {
    run_ranks(1, |comm| {
        let mut level = build(&comm, (8, 8, 8), 1)?;
        let g = level.geometry.clone();
        let mut rhs = DistVector::zeros(g.local_rows());
        mhb_core::fill_deterministic(&mut rhs, &g);
        let mut z = level.new_vector();
        z.fill(5.0);
        mg_precondition(&comm, &mut level, &rhs, &mut z)?;
        let mut expected = level.new_vector();
        symgs(&comm, &level.matrix, &level.plan, &rhs, &mut expected)?;
        assert_eq!(z.owned(), expected.owned());
        Ok(())
    });
}

#[test]
fn zero_rhs_gives_zero_correction() {
    run_ranks(2, |comm| {
        let mut level = build(&comm, (16, 16, 16), 4)?;
        let rhs = DistVector::zeros(level.matrix.nrows);
        let mut z = level.new_vector();
        z.fill(3.0);
        mg_precondition(&comm, &mut level, &rhs, &mut z)?;
        assert!(z.owned().iter().all(|&v| v == 0.0));
        Ok(())
    });
}

#[test]
fn restriction_injects_and_prolongation_adds() {
    run_ranks(1, |comm| {
        let mut level = build(&comm, (8, 8, 8), 2)?;
        let n = level.matrix.nrows;

        // residual identically c when x = 0 and rhs = c
        let rhs = DistVector::from_owned(vec![2.5; n]);
        let mut x = level.new_vector();
        restrict_residual(&comm, &mut level, &rhs, &mut x)?;
        assert!(level.coarse_rhs().owned().iter().all(|&v| v == 2.5));

        // zero coarse correction changes nothing
        level.coarse_x_mut().fill(0.0);
        let mut y = DistVector::from_owned((0..n).map(|i| i as f64).collect());
        let before = y.clone();
        prolong_add(&level, &mut y);
        assert_eq!(y, before);

        // a delta at a coarse-aligned point survives restrict then prolong
        let c = 9;
        let f = level.f2c[c];
        let mut delta = vec![0.0; n];
        delta[f] = 1.0;
        let rhs = DistVector::from_owned(delta.clone());
        let mut x = level.new_vector();
        restrict_residual(&comm, &mut level, &rhs, &mut x)?;
        let coarse = level.coarse_rhs().clone();
        assert_eq!(coarse.owned().iter().filter(|&&v| v != 0.0).count(), 1);
        level.coarse_x_mut().owned_mut().copy_from_slice(coarse.owned());
        let mut out = DistVector::zeros(n);
        prolong_add(&level, &mut out);
        assert_eq!(out.owned(), &delta[..]);
        Ok(())
    });
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DistVector {
    DistVector::from_owned((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

#[test]
fn preconditioner_is_symmetric() {
    for (dims, levels) in [((8, 8, 8), 4), ((4, 4, 4), 3), ((8, 4, 8), 2)] {
        run_ranks(1, |comm| {
            let mut level = build(&comm, dims, levels)?;
            let n = level.matrix.nrows;
            let mut rng = ChaCha8Rng::seed_from_u64(dims.0 as u64 * 31 + levels as u64);
            for _ in 0..5 {
                let u = random_vector(&mut rng, n);
                let v = random_vector(&mut rng, n);
                let mut mu = level.new_vector();
                let mut mv = level.new_vector();
                mg_precondition(&comm, &mut level, &u, &mut mu)?;
                mg_precondition(&comm, &mut level, &v, &mut mv)?;
                let lhs = dot_local(u.owned(), mv.owned());
                let rhs = dot_local(mu.owned(), v.owned());
                let scale = dot_local(u.owned(), u.owned()).sqrt() * dot_local(v.owned(), v.owned()).sqrt();
                assert!((lhs - rhs).abs() <= 1e-10 * scale, "{dims:?}: {lhs} vs {rhs}");
            }
            Ok(())
        });
    }
}

#[test]
fn preconditioning_reduces_iteration_count() {
    let counts = run_ranks(1, |comm| {
        let g = Geometry::new(1, 0, 16, 16, 16)?;
        let p = generate_problem(&g);
        let mut level = MgLevel::new(&comm, g, p.matrix, &MgConfig::default())?;
        let mut counts = Vec::new();
        for preconditioned in [true, false] {
            let mut x = level.new_vector();
            let opts = CgOptions { max_iters: 500, tolerance: 1e-6, preconditioned };
            let res = cg_solve(&comm, &mut level, &p.rhs, &mut x, &opts)?;
            assert!(res.final_relative_residual <= 1e-6);
            counts.push(res.iterations);
        }
        Ok(counts)
    });
    let (with, without) = (counts[0][0], counts[0][1]);
    assert!(with < without, "{with} >= {without}");
}
