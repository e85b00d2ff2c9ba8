#![allow(dead_code)]

use std::collections::BTreeMap;

use mhb_comm::{spawn_job, Backend, Communicator, JobConfig};
use mhb_core::{CoreError, Geometry};

pub fn run_ranks<T: Send>(
    ranks: usize,
    f: impl Fn(Communicator) -> Result<T, CoreError> + Sync,
) -> Vec<T> {
    spawn_job(&JobConfig::new(ranks, Backend::InProcess), f).unwrap()
}

/// The global 27-point operator built directly from its definition: row
/// `i` couples to every in-bounds point within Chebyshev distance one.
/// Keyed by (row, col) so iteration is row-major with ascending columns.
pub fn oracle_matrix(gnx: usize, gny: usize, gnz: usize) -> BTreeMap<(u64, u64), f64> {
    let id = |x: usize, y: usize, z: usize| (z * gnx * gny + y * gnx + x) as u64;
    let mut m = BTreeMap::new();
    for z in 0..gnz {
        for y in 0..gny {
            for x in 0..gnx {
                for z2 in z.saturating_sub(1)..=(z + 1).min(gnz - 1) {
                    for y2 in y.saturating_sub(1)..=(y + 1).min(gny - 1) {
                        for x2 in x.saturating_sub(1)..=(x + 1).min(gnx - 1) {
                            let v = if (x, y, z) == (x2, y2, z2) { 26.0 } else { -1.0 };
                            m.insert((id(x, y, z), id(x2, y2, z2)), v);
                        }
                    }
                }
            }
        }
    }
    m
}

/// Serial SpMV over the oracle, summing each row in ascending column order.
pub fn oracle_spmv(m: &BTreeMap<(u64, u64), f64>, n: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for (&(r, c), &v) in m {
        y[r as usize] += v * x[c as usize];
    }
    y
}

/// Scatters per-rank owned values into one global vector.
pub fn reassemble(parts: &[(Geometry, Vec<f64>)]) -> Vec<f64> {
    let total = parts[0].0.global_rows() as usize;
    let mut out = vec![f64::NAN; total];
    for (g, vals) in parts {
        for (i, v) in vals.iter().enumerate() {
            let (x, y, z) = g.local_coords(i);
            out[g.global_row_id(x, y, z) as usize] = *v;
        }
    }
    out
}

pub fn dense(m: &BTreeMap<(u64, u64), f64>, n: usize) -> nalgebra::DMatrix<f64> {
    let mut d = nalgebra::DMatrix::zeros(n, n);
    for (&(r, c), &v) in m {
        d[(r as usize, c as usize)] = v;
    }
    d
}

pub fn global_ids(g: &Geometry) -> Vec<u64> {
    (0..g.local_rows())
        .map(|i| {
            let (x, y, z) = g.local_coords(i);
            g.global_row_id(x, y, z)
        })
        .collect()
}
