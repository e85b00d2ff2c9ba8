//! 27-point stencil problem: matrix, right-hand side and vector fills.

use std::io::{self, Write};

use crate::error::{CoreError, Result};
use crate::geometry::Geometry;

pub const DIAGONAL_VALUE: f64 = 26.0;
pub const OFF_DIAGONAL_VALUE: f64 = -1.0;

/// Column placeholder for a non-owned column before halo setup.
pub const UNRESOLVED_COLUMN: usize = usize::MAX;

/// Rank-local vector: `owned` entries followed by external (halo) slots.
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector {
    values: Vec<f64>,
    owned: usize,
}

impl DistVector {
    pub fn zeros(owned: usize) -> DistVector {
        DistVector { values: vec![0.0; owned], owned }
    }

    pub fn with_externals(owned: usize, externals: usize) -> DistVector {
        DistVector { values: vec![0.0; owned + externals], owned }
    }

    pub fn from_owned(values: Vec<f64>) -> DistVector {
        let owned = values.len();
        DistVector { values, owned }
    }

    pub fn owned_len(&self) -> usize {
        self.owned
    }

    pub fn external_len(&self) -> usize {
        self.values.len() - self.owned
    }

    pub fn owned(&self) -> &[f64] {
        &self.values[..self.owned]
    }

    pub fn owned_mut(&mut self) -> &mut [f64] {
        &mut self.values[..self.owned]
    }

    pub fn external(&self) -> &[f64] {
        &self.values[self.owned..]
    }

    pub fn external_mut(&mut self) -> &mut [f64] {
        &mut self.values[self.owned..]
    }

    /// Owned entries followed by externals, indexable by local column id.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn resize_external(&mut self, externals: usize) {
        self.values.resize(self.owned + externals, 0.0);
    }

    /// Sets owned entries to `value`; externals are left as they are.
    pub fn fill(&mut self, value: f64) {
        self.owned_mut().fill(value);
    }
}

/// Compressed-sparse-row matrix holding this rank's rows.
///
/// Columns are local ids: owned columns are `0..nrows`, external columns are
/// appended after `nrows` once the halo is set up. Until then non-owned
/// columns hold [`UNRESOLVED_COLUMN`] and `global_cols` carries the global id
/// of every nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Position of the diagonal within each row's nonzeros.
    pub diag_pos: Vec<usize>,
    pub global_cols: Option<Vec<u64>>,
}

impl CsrMatrix {
    /// Builds a matrix from explicit local rows of `(column, value)`; every
    /// row must contain its diagonal. Intended for small hand-made systems.
    pub fn from_rows(rows: &[Vec<(usize, f64)>]) -> Result<CsrMatrix> {
        let nrows = rows.len();
        let mut m = CsrMatrix {
            nrows,
            ncols: nrows,
            row_offsets: vec![0],
            col_indices: Vec::new(),
            values: Vec::new(),
            diag_pos: Vec::with_capacity(nrows),
            global_cols: None,
        };
        for (i, row) in rows.iter().enumerate() {
            let diag = row
                .iter()
                .position(|&(c, _)| c == i)
                .ok_or(CoreError::ZeroDiagonal { row: i })?;
            m.diag_pos.push(diag);
            for &(c, v) in row {
                if c >= nrows {
                    return Err(CoreError::Geometry(format!("column {c} outside {nrows}x{nrows} matrix")));
                }
                m.col_indices.push(c);
                m.values.push(v);
            }
            m.row_offsets.push(m.col_indices.len());
        }
        Ok(m)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_offsets[row + 1] - self.row_offsets[row]
    }

    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[row]..self.row_offsets[row + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    pub fn diagonal(&self, row: usize) -> f64 {
        self.values[self.row_offsets[row] + self.diag_pos[row]]
    }

    pub fn diagonal_mut(&mut self, row: usize) -> &mut f64 {
        &mut self.values[self.row_offsets[row] + self.diag_pos[row]]
    }

    /// True once every column index refers to a local slot.
    pub fn is_local(&self) -> bool {
        self.global_cols.is_none()
    }

    /// Writes the rows as `row col value` lines (global ids, 0-based, row
    /// order then storage order). Needs the global column ids, so it must be
    /// called before halo setup.
    pub fn write_coordinates<W: Write>(&self, geom: &Geometry, mut w: W) -> io::Result<()> {
        let globals = self.global_cols.as_ref().ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidInput, "global column ids already released")
        })?;
        for i in 0..self.nrows {
            let (x, y, z) = geom.local_coords(i);
            let row = geom.global_row_id(x, y, z);
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                writeln!(w, "{} {} {}", row, globals[k], self.values[k])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub matrix: CsrMatrix,
    pub rhs: DistVector,
    pub exact: DistVector,
}

/// Generates this rank's rows of the 27-point operator.
///
/// Nonzeros in a row are stored by offset `(dz, dy, dx)` in lexicographic
/// order, which is also increasing global column order.
pub fn generate_matrix(geom: &Geometry) -> CsrMatrix {
    let nrows = geom.local_rows();
    let mut row_offsets = Vec::with_capacity(nrows + 1);
    let mut col_indices = Vec::with_capacity(nrows * 27);
    let mut values = Vec::with_capacity(nrows * 27);
    let mut global_cols = Vec::with_capacity(nrows * 27);
    let mut diag_pos = Vec::with_capacity(nrows);
    row_offsets.push(0);

    for iz in 0..geom.nz {
        for iy in 0..geom.ny {
            for ix in 0..geom.nx {
                let (gx, gy, gz) = geom.to_global(ix, iy, iz);
                let start = col_indices.len();
                for dz in -1i64..=1 {
                    let z = gz as i64 + dz;
                    if z < 0 || z >= geom.gnz as i64 {
                        continue;
                    }
                    for dy in -1i64..=1 {
                        let y = gy as i64 + dy;
                        if y < 0 || y >= geom.gny as i64 {
                            continue;
                        }
                        for dx in -1i64..=1 {
                            let x = gx as i64 + dx;
                            if x < 0 || x >= geom.gnx as i64 {
                                continue;
                            }
                            let (x, y, z) = (x as usize, y as usize, z as usize);
                            let global = geom.global_id(x, y, z);
                            let diag = dx == 0 && dy == 0 && dz == 0;
                            if diag {
                                diag_pos.push(col_indices.len() - start);
                            }
                            col_indices.push(geom.local_index_of_global(global).unwrap_or(UNRESOLVED_COLUMN));
                            global_cols.push(global);
                            values.push(if diag { DIAGONAL_VALUE } else { OFF_DIAGONAL_VALUE });
                        }
                    }
                }
                row_offsets.push(col_indices.len());
            }
        }
    }

    CsrMatrix {
        nrows,
        ncols: nrows,
        row_offsets,
        col_indices,
        values,
        diag_pos,
        global_cols: Some(global_cols),
    }
}

/// Matrix, right-hand side `A·1` and the all-ones exact solution.
pub fn generate_problem(geom: &Geometry) -> Problem {
    let matrix = generate_matrix(geom);
    // each row sums to 26 - (nnz - 1)
    let rhs = (0..matrix.nrows).map(|i| 27.0 - matrix.row_nnz(i) as f64).collect();
    Problem {
        rhs: DistVector::from_owned(rhs),
        exact: DistVector::from_owned(vec![1.0; matrix.nrows]),
        matrix,
    }
}

/// Coarse level of `fine`: the same operator on the grid with every local
/// dimension halved, plus the fine local index of each coarse point.
#[derive(Debug, Clone)]
pub struct CoarseProblem {
    pub geometry: Geometry,
    pub matrix: CsrMatrix,
    pub f2c: Vec<usize>,
}

pub fn generate_coarse_problem(fine: &Geometry) -> Result<CoarseProblem> {
    let geometry = fine.coarsened()?;
    let mut f2c = Vec::with_capacity(geometry.local_rows());
    for iz in 0..geometry.nz {
        for iy in 0..geometry.ny {
            for ix in 0..geometry.nx {
                f2c.push(fine.local_index(2 * ix, 2 * iy, 2 * iz));
            }
        }
    }
    let matrix = generate_matrix(&geometry);
    Ok(CoarseProblem { geometry, matrix, f2c })
}

/// Value assigned to global row `g` by [`fill_deterministic`].
pub fn deterministic_value(g: u64) -> f64 {
    let hashed = g.wrapping_mul(2_654_435_761) & 0xFFFF_FFFF;
    0.5 + hashed as f64 / (1u64 << 33) as f64
}

/// Fills owned entries from their global row ids, so the same global row
/// gets the same value under any decomposition.
pub fn fill_deterministic(vec: &mut DistVector, geom: &Geometry) {
    for (i, v) in vec.owned_mut().iter_mut().enumerate() {
        let (x, y, z) = geom.local_coords(i);
        *v = deterministic_value(geom.global_row_id(x, y, z));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn serial(n: usize) -> Geometry {
        Geometry::new(1, 0, n, n, n).unwrap()
    }

    #[test]
    fn row_counts_interior_face_edge_corner() {
        let g = serial(4);
        let m = generate_matrix(&g);
        assert_eq!(m.row_nnz(g.local_index(0, 0, 0)), 8);
        assert_eq!(m.row_nnz(g.local_index(3, 3, 3)), 8);
        assert_eq!(m.row_nnz(g.local_index(1, 0, 0)), 12);
        assert_eq!(m.row_nnz(g.local_index(1, 1, 0)), 18);
        assert_eq!(m.row_nnz(g.local_index(1, 2, 1)), 27);
    }

    #[test]
    fn values_and_diagonal_positions() {
        let m = generate_matrix(&serial(4));
        for i in 0..m.nrows {
            assert_eq!(m.diagonal(i), DIAGONAL_VALUE);
            let (cols, vals) = m.row(i);
            assert_eq!(cols[m.diag_pos[i]], i);
            for (k, v) in vals.iter().enumerate() {
                if k != m.diag_pos[i] {
                    assert_eq!(*v, OFF_DIAGONAL_VALUE);
                }
            }
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn rhs_interior_and_corner() {
        let g = serial(4);
        let p = generate_problem(&g);
        assert_eq!(p.rhs.owned()[g.local_index(1, 1, 1)], 0.0);
        assert_eq!(p.rhs.owned()[g.local_index(0, 0, 0)], 19.0);
        assert!(p.exact.owned().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_owned_columns_wait_for_halo_setup() {
        let g = Geometry::new(2, 0, 4, 4, 4).unwrap();
        let m = generate_matrix(&g);
        let globals = m.global_cols.as_ref().unwrap();
        let unresolved = m.col_indices.iter().filter(|&&c| c == UNRESOLVED_COLUMN).count();
        // rank 0 of a z-split touches the 4x4 plane above it; each plane point
        // is referenced by up to 9 rows
        assert!(unresolved > 0);
        for (k, &c) in m.col_indices.iter().enumerate() {
            if c == UNRESOLVED_COLUMN {
                assert_ne!(g.owner_of_global_id(globals[k]).unwrap(), 0);
            }
        }
    }

    #[test]
    fn coarse_examples() {
        let fine = serial(16);
        let c = generate_coarse_problem(&fine).unwrap();
        assert_eq!(c.matrix.nrows, 512);
        assert_eq!(c.f2c[0], 0);
        assert_eq!(c.f2c[1], 2);
        assert_eq!(c.f2c[c.geometry.local_index(1, 1, 1)], fine.local_index(2, 2, 2));
        let mut g = fine;
        for _ in 0..3 {
            g = generate_coarse_problem(&g).unwrap().geometry;
        }
        assert_eq!((g.nx, g.ny, g.nz), (2, 2, 2));
        let odd = Geometry::new(1, 0, 3, 4, 4).unwrap();
        assert!(matches!(generate_coarse_problem(&odd), Err(CoreError::OddDimension { .. })));
    }

    #[test]
    fn deterministic_fill_values() {
        assert_eq!(deterministic_value(0), 0.5);
        assert_eq!(deterministic_value(1), 0.5 + 2_654_435_761.0 / 8_589_934_592.0);
        for g in [0u64, 1, 17, 4095, 1 << 40] {
            let v = deterministic_value(g);
            assert!((0.5..1.0).contains(&v));
        }
    }

    #[test]
    fn coordinate_dump_format() {
        let g = serial(2);
        let m = generate_matrix(&g);
        let mut out = Vec::new();
        m.write_coordinates(&g, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 64);
        assert_eq!(lines[0], "0 0 26");
        assert_eq!(lines[1], "0 1 -1");
        let mut local = m.clone();
        local.global_cols = None;
        assert!(local.write_coordinates(&g, Vec::new()).is_err());
    }

    #[test]
    fn from_rows_requires_diagonal() {
        assert!(CsrMatrix::from_rows(&[vec![(0, 26.0)]]).is_ok());
        assert!(matches!(
            CsrMatrix::from_rows(&[vec![(1, 1.0)], vec![(1, 1.0)]]),
            Err(CoreError::ZeroDiagonal { row: 0 })
        ));
    }
}
