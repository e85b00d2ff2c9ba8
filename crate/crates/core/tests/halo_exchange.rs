mod common;

use std::collections::BTreeSet;

use common::{global_ids, run_ranks};
use mhb_core::{exchange_halo, generate_matrix, setup_halo, DistVector, Geometry};

#[test]
fn single_rank_has_no_halo() {
    let out = run_ranks(1, |comm| {
        let g = Geometry::new(1, 0, 8, 8, 8)?;
        let mut m = generate_matrix(&g);
        let plan = setup_halo(&comm, &g, &mut m)?;
        let mut v = plan.new_vector();
        let before = comm.counters();
        exchange_halo(&comm, &plan, &mut v)?;
        let d = comm.counters() - before;
        Ok((plan.neighbors.len(), plan.external_count(), m.ncols, m.is_local(), d.messages_sent))
    });
    assert_eq!(out, vec![(0, 0, 512, true, 0)]);
}

#[test]
fn x_split_sends_one_boundary_plane() {
    let out = run_ranks(2, |comm| {
        let g = Geometry::with_process_grid((2, 1, 1), comm.rank(), 16, 16, 16)?;
        let mut m = generate_matrix(&g);
        let plan = setup_halo(&comm, &g, &mut m)?;
        Ok((plan.neighbors.clone(), plan.send_lists[0].len(), plan.recv_counts.clone()))
    });
    assert_eq!(out[0], (vec![1], 256, vec![256]));
    assert_eq!(out[1], (vec![0], 256, vec![256]));
}

/// Neighbors of `rank` found by enumerating every stencil reference that
/// crosses its box.
fn enumerated_neighbors(g: &Geometry) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for i in 0..g.local_rows() {
        let (x, y, z) = g.local_coords(i);
        let (gx, gy, gz) = g.to_global(x, y, z);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (a, b, c) = (gx as i64 + dx, gy as i64 + dy, gz as i64 + dz);
                    if a < 0 || b < 0 || c < 0 {
                        continue;
                    }
                    if let Ok(owner) = g.owner_rank(a as usize, b as usize, c as usize) {
                        if owner != g.rank {
                            out.insert(owner);
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn corner_rank_of_cube_has_seven_neighbors() {
    let out = run_ranks(8, |comm| {
        let g = Geometry::new(8, comm.rank(), 4, 4, 4)?;
        let mut m = generate_matrix(&g);
        let plan = setup_halo(&comm, &g, &mut m)?;
        Ok((g, plan))
    });
    for (g, plan) in &out {
        let expected: Vec<usize> = enumerated_neighbors(g).into_iter().collect();
        assert_eq!(plan.neighbors, expected);
        assert_eq!(plan.neighbors.len(), 7);
    }
}

#[test]
fn plans_are_mirror_consistent_and_ordered() {
    let out = run_ranks(8, |comm| {
        let g = Geometry::from_global(8, comm.rank(), 8, 8, 16)?;
        let mut m = generate_matrix(&g);
        let plan = setup_halo(&comm, &g, &mut m)?;
        Ok((g, m, plan))
    });
    for (g, m, plan) in &out {
        assert!(plan.neighbors.windows(2).all(|w| w[0] < w[1]));
        let mut start = 0;
        for (i, &peer) in plan.neighbors.iter().enumerate() {
            let (_, _, other) = &out[peer];
            let j = other.neighbors.iter().position(|&r| r == g.rank).unwrap();
            assert_eq!(plan.recv_counts[i], other.send_lists[j].len());
            let slots = &plan.external_globals[start..start + plan.recv_counts[i]];
            assert!(slots.windows(2).all(|w| w[0] < w[1]));
            for &id in slots {
                assert_eq!(g.owner_of_global_id(id).unwrap(), peer);
            }
            start += plan.recv_counts[i];
        }
        assert!(m.col_indices.iter().all(|&c| c < m.ncols));
        assert_eq!(m.ncols, m.nrows + plan.external_count());
    }
}

#[test]
fn exchange_delivers_owner_values() {
    for ranks in [2, 4, 8] {
        let out = run_ranks(ranks, |comm| {
            let g = Geometry::from_global(ranks, comm.rank(), 8, 8, 16)?;
            let mut m = generate_matrix(&g);
            let plan = setup_halo(&comm, &g, &mut m)?;
            let ids = global_ids(&g);
            let mut v = DistVector::from_owned(ids.iter().map(|&id| id as f64).collect());
            exchange_halo(&comm, &plan, &mut v)?;
            let first = v.clone();
            let before = comm.counters();
            exchange_halo(&comm, &plan, &mut v)?;
            let d = comm.counters() - before;
            assert_eq!(d.halo_exchanges, 1);
            assert_eq!(v, first);
            Ok((plan.external_globals.clone(), v.external().to_vec(), v.owned() == &ids.iter().map(|&i| i as f64).collect::<Vec<_>>()[..]))
        });
        for (globals, external, owned_intact) in out {
            assert!(owned_intact);
            let expected: Vec<f64> = globals.iter().map(|&g| g as f64).collect();
            assert_eq!(external, expected);
        }
    }
}

#[test]
fn second_setup_is_rejected() {
    run_ranks(1, |comm| {
        let g = Geometry::new(1, 0, 2, 2, 2)?;
        let mut m = generate_matrix(&g);
        setup_halo(&comm, &g, &mut m)?;
        assert!(setup_halo(&comm, &g, &mut m).is_err());
        Ok(())
    });
}
