//! Process grid and index maps.
//!
//! Local points are numbered x fastest: `iz*nx*ny + iy*nx + ix`. Global row
//! ids use the same convention over the global grid, and ranks are laid out
//! over the process grid x fastest as well.

use crate::error::{CoreError, Result};

/// Smallest local dimension the benchmark driver accepts.
pub const MIN_BENCHMARK_DIM: usize = 16;

/// Three-factor split of `p` minimizing `px + py + pz`; ties go to the
/// lexicographically smallest triple with `px <= py <= pz`.
pub fn factor_process_grid(p: usize) -> (usize, usize, usize) {
    assert!(p >= 1, "process count must be positive");
    let mut best = (1, 1, p);
    let mut best_sum = usize::MAX;
    let mut px = 1;
    while px * px * px <= p {
        if p.is_multiple_of(px) {
            let rest = p / px;
            let mut py = px;
            while py * py <= rest {
                if rest.is_multiple_of(py) {
                    let pz = rest / py;
                    let sum = px + py + pz;
                    if sum < best_sum {
                        best_sum = sum;
                        best = (px, py, pz);
                    }
                }
                py += 1;
            }
        }
        px += 1;
    }
    best
}

pub fn rank_coords(rank: usize, px: usize, py: usize, pz: usize) -> (usize, usize, usize) {
    debug_assert!(rank < px * py * pz);
    (rank % px, (rank / px) % py, rank / (px * py))
}

/// Checks the driver-level constraint on a local dimension: at least 16 and
/// a multiple of 8.
pub fn check_benchmark_dim(n: usize) -> Result<()> {
    if n < MIN_BENCHMARK_DIM || !n.is_multiple_of(8) {
        return Err(CoreError::Geometry(format!(
            "local dimension {n} must be at least {MIN_BENCHMARK_DIM} and a multiple of 8"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Geometry {
    pub size: usize,
    pub rank: usize,
    pub px: usize,
    pub py: usize,
    pub pz: usize,
    pub ipx: usize,
    pub ipy: usize,
    pub ipz: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub gnx: usize,
    pub gny: usize,
    pub gnz: usize,
}

impl Geometry {
    /// Geometry for `rank` of `size`, with the process grid chosen by
    /// [`factor_process_grid`].
    pub fn new(size: usize, rank: usize, nx: usize, ny: usize, nz: usize) -> Result<Geometry> {
        if size == 0 {
            return Err(CoreError::Geometry("process count must be positive".into()));
        }
        let (px, py, pz) = factor_process_grid(size);
        Self::with_process_grid((px, py, pz), rank, nx, ny, nz)
    }

    pub fn with_process_grid(
        (px, py, pz): (usize, usize, usize),
        rank: usize,
        nx: usize,
        ny: usize,
        nz: usize,
    ) -> Result<Geometry> {
        let size = px * py * pz;
        if size == 0 {
            return Err(CoreError::Geometry("process grid dimensions must be positive".into()));
        }
        if rank >= size {
            return Err(CoreError::Geometry(format!("rank {rank} outside process grid of {size}")));
        }
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(CoreError::Geometry("local dimensions must be positive".into()));
        }
        let (ipx, ipy, ipz) = rank_coords(rank, px, py, pz);
        Ok(Geometry {
            size,
            rank,
            px,
            py,
            pz,
            ipx,
            ipy,
            ipz,
            nx,
            ny,
            nz,
            gnx: px * nx,
            gny: py * ny,
            gnz: pz * nz,
        })
    }

    /// Splits a fixed global grid over `size` ranks. Fails if the chosen
    /// process grid does not divide the global dimensions.
    pub fn from_global(size: usize, rank: usize, gnx: usize, gny: usize, gnz: usize) -> Result<Geometry> {
        if size == 0 {
            return Err(CoreError::Geometry("process count must be positive".into()));
        }
        let (px, py, pz) = factor_process_grid(size);
        if !gnx.is_multiple_of(px) || !gny.is_multiple_of(py) || !gnz.is_multiple_of(pz) {
            return Err(CoreError::Geometry(format!(
                "global grid {gnx}x{gny}x{gnz} does not split over process grid {px}x{py}x{pz}"
            )));
        }
        Self::with_process_grid((px, py, pz), rank, gnx / px, gny / py, gnz / pz)
    }

    /// The same decomposition with every local dimension halved.
    pub fn coarsened(&self) -> Result<Geometry> {
        if !self.nx.is_multiple_of(2) || !self.ny.is_multiple_of(2) || !self.nz.is_multiple_of(2) {
            return Err(CoreError::OddDimension { nx: self.nx, ny: self.ny, nz: self.nz });
        }
        Self::with_process_grid((self.px, self.py, self.pz), self.rank, self.nx / 2, self.ny / 2, self.nz / 2)
    }

    pub fn local_rows(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn global_rows(&self) -> u64 {
        (self.gnx * self.gny * self.gnz) as u64
    }

    pub fn local_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        iz * self.nx * self.ny + iy * self.nx + ix
    }

    pub fn local_coords(&self, index: usize) -> (usize, usize, usize) {
        (index % self.nx, (index / self.nx) % self.ny, index / (self.nx * self.ny))
    }

    /// Global grid coordinates of a local point.
    pub fn to_global(&self, ix: usize, iy: usize, iz: usize) -> (usize, usize, usize) {
        (self.ipx * self.nx + ix, self.ipy * self.ny + iy, self.ipz * self.nz + iz)
    }

    pub fn global_id(&self, gix: usize, giy: usize, giz: usize) -> u64 {
        (giz * self.gnx * self.gny + giy * self.gnx + gix) as u64
    }

    pub fn global_row_id(&self, ix: usize, iy: usize, iz: usize) -> u64 {
        let (gx, gy, gz) = self.to_global(ix, iy, iz);
        self.global_id(gx, gy, gz)
    }

    pub fn global_coords(&self, id: u64) -> (usize, usize, usize) {
        let id = id as usize;
        (id % self.gnx, (id / self.gnx) % self.gny, id / (self.gnx * self.gny))
    }

    pub fn contains_global(&self, gix: usize, giy: usize, giz: usize) -> bool {
        gix < self.gnx && giy < self.gny && giz < self.gnz
    }

    pub fn owner_rank(&self, gix: usize, giy: usize, giz: usize) -> Result<usize> {
        if !self.contains_global(gix, giy, giz) {
            return Err(CoreError::OutOfBounds(gix as u64, giy as u64, giz as u64));
        }
        let (rx, ry, rz) = (gix / self.nx, giy / self.ny, giz / self.nz);
        Ok(rz * self.px * self.py + ry * self.px + rx)
    }

    pub fn owner_of_global_id(&self, id: u64) -> Result<usize> {
        if id >= self.global_rows() {
            let (x, y, z) = self.global_coords(id);
            return Err(CoreError::OutOfBounds(x as u64, y as u64, z as u64));
        }
        let (x, y, z) = self.global_coords(id);
        self.owner_rank(x, y, z)
    }

    /// Local index of a global row if this rank owns it.
    pub fn local_index_of_global(&self, id: u64) -> Option<usize> {
        if id >= self.global_rows() {
            return None;
        }
        let (gx, gy, gz) = self.global_coords(id);
        let (x0, y0, z0) = (self.ipx * self.nx, self.ipy * self.ny, self.ipz * self.nz);
        let owned = (x0..x0 + self.nx).contains(&gx)
            && (y0..y0 + self.ny).contains(&gy)
            && (z0..z0 + self.nz).contains(&gz);
        owned.then(|| self.local_index(gx - x0, gy - y0, gz - z0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Every ordered triple with product `p`, independent of the search above.
    fn brute_force_best(p: usize) -> (usize, usize, usize) {
        let mut triples = Vec::new();
        for a in 1..=p {
            for b in 1..=p {
                for c in 1..=p {
                    if a * b * c == p {
                        triples.push((a + b + c, a, b, c));
                    }
                }
            }
        }
        let min = triples.iter().map(|t| t.0).min().unwrap();
        let mut best: Vec<_> = triples
            .into_iter()
            .filter(|t| t.0 == min && t.1 <= t.2 && t.2 <= t.3)
            .map(|t| (t.1, t.2, t.3))
            .collect();
        best.sort();
        best[0]
    }

    #[test]
    fn factor_examples() {
        assert_eq!(factor_process_grid(1), (1, 1, 1));
        assert_eq!(factor_process_grid(8), (2, 2, 2));
        assert_eq!(factor_process_grid(12), (2, 2, 3));
        assert_eq!(factor_process_grid(7), (1, 1, 7));
        assert_eq!(factor_process_grid(2), (1, 1, 2));
        assert_eq!(factor_process_grid(4), (1, 2, 2));
    }

    #[test]
    fn factor_matches_brute_force() {
        for p in 1..=96 {
            assert_eq!(factor_process_grid(p), brute_force_best(p), "p = {p}");
        }
    }

    #[test]
    fn rank_coords_examples() {
        assert_eq!(rank_coords(0, 2, 2, 2), (0, 0, 0));
        assert_eq!(rank_coords(3, 2, 2, 2), (1, 1, 0));
        assert_eq!(rank_coords(7, 2, 2, 2), (1, 1, 1));
    }

    #[test]
    fn global_row_examples() {
        let g = Geometry::new(1, 0, 16, 16, 16).unwrap();
        assert_eq!(g.global_row_id(0, 0, 0), 0);
        assert_eq!(g.global_row_id(0, 0, 1), 256);
        let g = Geometry::with_process_grid((2, 1, 1), 1, 16, 16, 16).unwrap();
        assert_eq!(g.global_row_id(0, 0, 0), 16);
    }

    #[test]
    fn owner_examples() {
        let g = Geometry::new(1, 0, 4, 4, 4).unwrap();
        assert_eq!(g.owner_rank(3, 2, 1).unwrap(), 0);
        let g = Geometry::new(8, 0, 16, 16, 16).unwrap();
        assert_eq!(g.owner_rank(17, 0, 0).unwrap(), 1);
        assert!(matches!(g.owner_rank(32, 0, 0), Err(CoreError::OutOfBounds(32, 0, 0))));
    }

    #[test]
    fn owner_round_trips_for_every_owned_point() {
        for r in 0..8 {
            let g = Geometry::new(8, r, 16, 16, 16).unwrap();
            for i in 0..g.local_rows() {
                let (x, y, z) = g.local_coords(i);
                let id = g.global_row_id(x, y, z);
                let (gx, gy, gz) = g.global_coords(id);
                assert_eq!(g.owner_rank(gx, gy, gz).unwrap(), r);
                assert_eq!(g.local_index_of_global(id), Some(i));
            }
        }
    }

    #[test]
    fn coarsening_requires_even_dims() {
        let g = Geometry::new(2, 1, 16, 8, 4).unwrap();
        let c = g.coarsened().unwrap();
        assert_eq!((c.nx, c.ny, c.nz, c.rank, c.pz), (8, 4, 2, 1, 2));
        let odd = Geometry::new(1, 0, 6, 3, 4).unwrap();
        assert!(matches!(odd.coarsened(), Err(CoreError::OddDimension { .. })));
    }

    #[test]
    fn from_global_checks_divisibility() {
        let g = Geometry::from_global(4, 3, 32, 16, 16).unwrap();
        assert_eq!((g.px, g.py, g.pz), (1, 2, 2));
        assert_eq!((g.nx, g.ny, g.nz), (32, 8, 8));
        assert!(Geometry::from_global(3, 0, 16, 16, 16).is_err());
    }

    #[test]
    fn benchmark_dims() {
        assert!(check_benchmark_dim(16).is_ok());
        assert!(check_benchmark_dim(24).is_ok());
        assert!(check_benchmark_dim(8).is_err());
        assert!(check_benchmark_dim(20).is_err());
    }

    proptest! {
        #[test]
        fn factor_is_sorted_and_exact(p in 1usize..5000) {
            let (a, b, c) = factor_process_grid(p);
            prop_assert_eq!(a * b * c, p);
            prop_assert!(a <= b && b <= c);
        }

        #[test]
        fn local_to_global_is_a_bijection(
            px in 1usize..4, py in 1usize..4, pz in 1usize..3,
            nx in 1usize..5, ny in 1usize..5, nz in 1usize..5,
        ) {
            let size = px * py * pz;
            let mut seen = vec![false; size * nx * ny * nz];
            for r in 0..size {
                let g = Geometry::with_process_grid((px, py, pz), r, nx, ny, nz).unwrap();
                for i in 0..g.local_rows() {
                    let (x, y, z) = g.local_coords(i);
                    let id = g.global_row_id(x, y, z) as usize;
                    prop_assert!(!seen[id]);
                    seen[id] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }
    }
}
