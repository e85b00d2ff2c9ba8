//! Sparse and vector kernels. Row sums run in CSR storage order.

use mhb_comm::Communicator;

use crate::error::{CoreError, Result};
use crate::halo::{exchange_halo, HaloPlan};
use crate::problem::{CsrMatrix, DistVector};

/// `y = A x` on owned rows, without communication. `x` is indexed by local
/// column id and must cover `matrix.ncols` entries.
pub fn spmv_local(matrix: &CsrMatrix, x: &[f64], y: &mut [f64]) {
    debug_assert!(x.len() >= matrix.ncols);
    for (i, out) in y.iter_mut().enumerate().take(matrix.nrows) {
        let (cols, vals) = matrix.row(i);
        let mut sum = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            sum += v * x[c];
        }
        *out = sum;
    }
}

/// `y = A x` after refreshing `x`'s halo.
pub fn spmv(
    comm: &Communicator,
    matrix: &CsrMatrix,
    plan: &HaloPlan,
    x: &mut DistVector,
    y: &mut DistVector,
) -> Result<()> {
    exchange_halo(comm, plan, x)?;
    spmv_local(matrix, x.as_slice(), y.owned_mut());
    Ok(())
}

/// One symmetric Gauss-Seidel sweep pair on owned rows using the externals
/// currently stored in `x` (no communication).
pub fn symgs_local(matrix: &CsrMatrix, rhs: &[f64], x: &mut [f64]) -> Result<()> {
    let relax = |i: usize, x: &mut [f64]| -> Result<()> {
        let (cols, vals) = matrix.row(i);
        let diag = vals[matrix.diag_pos[i]];
        if diag == 0.0 {
            return Err(CoreError::ZeroDiagonal { row: i });
        }
        let mut sum = rhs[i];
        for (&c, &v) in cols.iter().zip(vals) {
            sum -= v * x[c];
        }
        // the loop also subtracted the diagonal term
        sum += diag * x[i];
        x[i] = sum / diag;
        Ok(())
    };
    for i in 0..matrix.nrows {
        relax(i, x)?;
    }
    for i in (0..matrix.nrows).rev() {
        relax(i, x)?;
    }
    Ok(())
}

/// Symmetric Gauss-Seidel: one halo exchange of `x`, then a forward and a
/// backward sweep over owned rows with the externals frozen.
pub fn symgs(
    comm: &Communicator,
    matrix: &CsrMatrix,
    plan: &HaloPlan,
    rhs: &DistVector,
    x: &mut DistVector,
) -> Result<()> {
    exchange_halo(comm, plan, x)?;
    symgs_local(matrix, rhs.owned(), x.as_mut_slice())
}

pub fn dot_local(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot of vectors with different lengths");
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += x * y;
    }
    sum
}

/// Global dot product of the owned entries; identical on every rank.
pub fn dot(comm: &Communicator, a: &DistVector, b: &DistVector) -> Result<f64> {
    Ok(comm.allreduce_sum(dot_local(a.owned(), b.owned()))?)
}

/// `w = alpha x + beta y` on owned entries.
pub fn waxpby(alpha: f64, x: &DistVector, beta: f64, y: &DistVector, w: &mut DistVector) {
    let (x, y) = (x.owned(), y.owned());
    let w = w.owned_mut();
    assert!(x.len() == y.len() && y.len() == w.len(), "waxpby length mismatch");
    for i in 0..w.len() {
        w[i] = alpha * x[i] + beta * y[i];
    }
}

/// `w = alpha x + beta w`, the aliased form of [`waxpby`].
pub fn waxpby_in_place(alpha: f64, x: &DistVector, beta: f64, w: &mut DistVector) {
    let x = x.owned();
    let w = w.owned_mut();
    assert_eq!(x.len(), w.len(), "waxpby length mismatch");
    for (wi, xi) in w.iter_mut().zip(x) {
        *wi = alpha * xi + beta * *wi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symgs_one_by_one() {
        let m = CsrMatrix::from_rows(&[vec![(0, 26.0)]]).unwrap();
        let mut x = vec![0.0];
        symgs_local(&m, &[52.0], &mut x).unwrap();
        assert_eq!(x, vec![2.0]);
    }

    #[test]
    fn symgs_zero_diagonal() {
        let mut m = CsrMatrix::from_rows(&[vec![(0, 1.0)]]).unwrap();
        *m.diagonal_mut(0) = 0.0;
        assert!(matches!(symgs_local(&m, &[1.0], &mut [0.0]), Err(CoreError::ZeroDiagonal { row: 0 })));
    }

    #[test]
    fn waxpby_examples() {
        let ones = DistVector::from_owned(vec![1.0; 4]);
        let x = DistVector::from_owned(vec![1.0, 2.0, 3.0, 4.0]);
        let y = DistVector::from_owned(vec![5.0, 6.0, 7.0, 8.0]);
        let mut w = DistVector::zeros(4);
        waxpby(1.0, &x, 0.0, &y, &mut w);
        assert_eq!(w, x);
        waxpby(0.0, &x, 1.0, &y, &mut w);
        assert_eq!(w, y);
        waxpby(2.0, &ones, -1.0, &ones, &mut w);
        assert_eq!(w, ones);
        let mut w = y.clone();
        waxpby_in_place(1.0, &x, 2.0, &mut w);
        assert_eq!(w.owned(), &[11.0, 14.0, 17.0, 20.0]);
    }
}
