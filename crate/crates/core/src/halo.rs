//! Neighbor discovery and boundary exchange.
//!
//! External slots are numbered by (neighbor rank ascending, global id
//! ascending). An exchange posts every send, in ascending neighbor order,
//! before receiving from each neighbor in the same order. This relies on
//! buffered sends: a plane of values is far below the per-pair buffer cap.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Instant;

use mhb_comm::{CommError, Communicator};

use crate::error::{CoreError, Result};
use crate::geometry::Geometry;
use crate::problem::{CsrMatrix, DistVector};

const SETUP_TAG: u32 = 999;
const EXCHANGE_TAG_BASE: u32 = 1000;

#[derive(Debug)]
pub struct HaloPlan {
    pub nrows: usize,
    pub neighbors: Vec<usize>,
    /// Owned local indices sent to each neighbor, parallel to `neighbors`.
    pub send_lists: Vec<Vec<usize>>,
    /// External slots filled by each neighbor, parallel to `neighbors`.
    pub recv_counts: Vec<usize>,
    /// Global id of each external slot, in slot order.
    pub external_globals: Vec<u64>,
    /// Global id to local column index (`>= nrows`).
    pub external_map: HashMap<u64, usize>,
    phase: AtomicU32,
}

impl HaloPlan {
    /// Plan for a rank with no neighbors.
    pub fn local_only(nrows: usize) -> HaloPlan {
        HaloPlan {
            nrows,
            neighbors: Vec::new(),
            send_lists: Vec::new(),
            recv_counts: Vec::new(),
            external_globals: Vec::new(),
            external_map: HashMap::new(),
            phase: AtomicU32::new(0),
        }
    }

    pub fn external_count(&self) -> usize {
        self.external_globals.len()
    }

    /// Global id of local column `col`.
    pub fn global_of_column(&self, geom: &Geometry, col: usize) -> u64 {
        if col < self.nrows {
            let (x, y, z) = geom.local_coords(col);
            geom.global_row_id(x, y, z)
        } else {
            self.external_globals[col - self.nrows]
        }
    }

    /// Vector sized for this rank's rows plus external slots.
    pub fn new_vector(&self) -> DistVector {
        DistVector::with_externals(self.nrows, self.external_count())
    }
}

fn encode_u64s(values: impl Iterator<Item = u64>) -> Vec<u8> {
    values.flat_map(u64::to_le_bytes).collect()
}

fn decode_u64s(bytes: &[u8]) -> Result<Vec<u64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(CommError::Decode { len: bytes.len(), what: "u64 list" }.into());
    }
    Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Assigns an external slot to every referenced non-owned column, rewrites
/// the matrix to local numbering and agrees send lists with each neighbor.
///
/// Collective. Every rank sends each neighbor the global ids it needs from
/// it; the neighbor's send list is exactly that request, so both sides of
/// every pair agree on counts by construction.
pub fn setup_halo(comm: &Communicator, geom: &Geometry, matrix: &mut CsrMatrix) -> Result<HaloPlan> {
    let globals = matrix.global_cols.take().ok_or(CoreError::HaloAlreadySetUp)?;
    let nrows = matrix.nrows;

    let mut wanted: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
    for (k, &col) in matrix.col_indices.iter().enumerate() {
        if col >= nrows {
            let global = globals[k];
            let owner = geom
                .owner_of_global_id(global)
                .map_err(|_| CoreError::UnownedColumn { global })?;
            if owner == geom.rank {
                return Err(CoreError::UnownedColumn { global });
            }
            wanted.entry(owner).or_default().insert(global);
        }
    }

    let mut plan = HaloPlan::local_only(nrows);
    for (&owner, ids) in &wanted {
        plan.neighbors.push(owner);
        plan.recv_counts.push(ids.len());
        for &id in ids {
            plan.external_map.insert(id, nrows + plan.external_globals.len());
            plan.external_globals.push(id);
        }
    }
    for (k, col) in matrix.col_indices.iter_mut().enumerate() {
        if *col >= nrows {
            *col = plan.external_map[&globals[k]];
        }
    }
    matrix.ncols = nrows + plan.external_count();

    for (&owner, ids) in &wanted {
        comm.send_owned(owner, SETUP_TAG, encode_u64s(ids.iter().copied()))?;
    }
    for &peer in &plan.neighbors {
        let requested = decode_u64s(&comm.recv(peer, SETUP_TAG)?)?;
        let list = requested
            .into_iter()
            .map(|global| {
                geom.local_index_of_global(global)
                    .ok_or(CoreError::MisroutedRequest { rank: geom.rank, peer, global })
            })
            .collect::<Result<Vec<_>>>()?;
        plan.send_lists.push(list);
    }
    Ok(plan)
}

/// Copies the current owned values of every external slot's owner into
/// `vec`'s external slots. Collective over the plan's neighbors.
pub fn exchange_halo(comm: &Communicator, plan: &HaloPlan, vec: &mut DistVector) -> Result<()> {
    let start = Instant::now();
    if vec.external_len() != plan.external_count() {
        vec.resize_external(plan.external_count());
    }
    let phase = plan.phase.fetch_add(1, Ordering::Relaxed);
    let tag = EXCHANGE_TAG_BASE + phase % 1000;

    let owned = vec.owned();
    for (&peer, list) in plan.neighbors.iter().zip(&plan.send_lists) {
        let mut buf = Vec::with_capacity(list.len() * 8);
        for &i in list {
            buf.extend_from_slice(&owned[i].to_le_bytes());
        }
        comm.send_owned(peer, tag, buf)?;
    }
    let mut offset = 0;
    let external = vec.external_mut();
    for (&peer, &count) in plan.neighbors.iter().zip(&plan.recv_counts) {
        let bytes = comm.recv(peer, tag)?;
        if bytes.len() != count * 8 {
            return Err(CommError::Decode { len: bytes.len(), what: "halo values" }.into());
        }
        for (slot, chunk) in external[offset..offset + count].iter_mut().zip(bytes.chunks_exact(8)) {
            *slot = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        offset += count;
    }
    comm.record_exchange(start.elapsed());
    Ok(())
}
