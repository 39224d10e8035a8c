//! Incomplete LU factorization with zero fill-in.
//!
//! The factors keep exactly the sparsity pattern of the input: entries of
//! `L` live where `A` has entries left of the diagonal, entries of `U` where
//! it has them on or right of it, and every update that would land outside
//! the pattern is dropped. The product of the factors then matches `A`
//! exactly on the pattern — the invariant the tests pin down.
//!
//! Both `M⁻¹` and `M⁻ᵀ` solves are provided because the singular-value
//! preconditioners need the pair: `M⁻¹M⁻ᵀ` for the normal equations and
//! `[0 M⁻¹; M⁻ᵀ 0]` for the augmented matrix.

use super::Preconditioner;
use crate::sparse::SparseMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IluError {
    /// Zero-fill factorization stores the diagonal in place, so a row whose
    /// pattern skips the diagonal cannot be factored.
    #[error("row {row} has no diagonal entry in the sparsity pattern")]
    MissingDiagonal { row: usize },
    #[error("zero pivot on row {row}")]
    ZeroPivot { row: usize },
}

/// The factors, sharing one CSR layout: strictly-left-of-diagonal entries
/// belong to `L` (unit diagonal implied), the rest to `U`.
pub struct Ilu0 {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    diag_idx: Vec<usize>,
}

/// Factors a square sparse matrix in row order, dropping all fill-in.
pub fn ilu0(a: &SparseMatrix) -> Result<Ilu0, IluError> {
    assert_eq!(a.nrows(), a.ncols(), "incomplete LU needs a square matrix");
    let n = a.nrows();
    let row_offsets = a.row_offsets().to_vec();
    let col_indices = a.col_indices().to_vec();
    let mut values = a.values().to_vec();

    let mut diag_idx = vec![0usize; n];
    for i in 0..n {
        let row = &col_indices[row_offsets[i]..row_offsets[i + 1]];
        match row.binary_search(&i) {
            Ok(pos) => diag_idx[i] = row_offsets[i] + pos,
            Err(_) => return Err(IluError::MissingDiagonal { row: i }),
        }
    }

    for i in 0..n {
        let row_end = row_offsets[i + 1];
        for kk in row_offsets[i]..diag_idx[i] {
            let k = col_indices[kk];
            let pivot = values[diag_idx[k]];
            if pivot == 0.0 {
                return Err(IluError::ZeroPivot { row: k });
            }
            let lik = values[kk] / pivot;
            values[kk] = lik;
            // Subtract lik times the upper part of row k, keeping only
            // positions already present in row i.
            let mut scan = kk + 1;
            for jj in diag_idx[k] + 1..row_offsets[k + 1] {
                let j = col_indices[jj];
                while scan < row_end && col_indices[scan] < j {
                    scan += 1;
                }
                if scan == row_end {
                    break;
                }
                if col_indices[scan] == j {
                    values[scan] -= lik * values[jj];
                }
            }
        }
    }

    // Diagonals of rows never used as pivot rows are only exercised by the
    // solves; report them here so factorization failure is always an Err.
    for i in 0..n {
        if values[diag_idx[i]] == 0.0 {
            return Err(IluError::ZeroPivot { row: i });
        }
    }

    Ok(Ilu0 { n, row_offsets, col_indices, values, diag_idx })
}

impl Ilu0 {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `x = M⁻¹ b` where `M = LU`: unit-lower forward sweep, then upper
    /// backward sweep.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for idx in self.row_offsets[i]..self.diag_idx[i] {
                s -= self.values[idx] * x[self.col_indices[idx]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for idx in self.diag_idx[i] + 1..self.row_offsets[i + 1] {
                s -= self.values[idx] * x[self.col_indices[idx]];
            }
            x[i] = s / self.values[self.diag_idx[i]];
        }
    }

    /// `x = M⁻ᵀ b`, i.e. solves `UᵀLᵀ x = b`. Both triangles are stored by
    /// rows, so the transposed sweeps scatter along rows instead of
    /// gathering: `Uᵀ` ascending, `Lᵀ` descending.
    pub fn solve_transposed(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        x.copy_from_slice(b);
        for i in 0..n {
            let yi = x[i] / self.values[self.diag_idx[i]];
            x[i] = yi;
            for idx in self.diag_idx[i] + 1..self.row_offsets[i + 1] {
                x[self.col_indices[idx]] -= self.values[idx] * yi;
            }
        }
        for i in (0..n).rev() {
            let xi = x[i];
            for idx in self.row_offsets[i]..self.diag_idx[i] {
                x[self.col_indices[idx]] -= self.values[idx] * xi;
            }
        }
    }

    /// `M⁻¹M⁻ᵀ` view for the normal equations.
    pub fn preconditioner_for_c(&self) -> Preconditioner<'_> {
        Preconditioner::for_c_from_m(
            self.n,
            "ilu0",
            |x, y| self.solve(x, y),
            |x, y| self.solve_transposed(x, y),
        )
    }

    /// `[0 M⁻¹; M⁻ᵀ 0]` view for the augmented matrix.
    pub fn preconditioner_for_b(&self) -> Preconditioner<'_> {
        Preconditioner::for_b_from_m(
            self.n,
            "ilu0",
            |x, y| self.solve(x, y),
            |x, y| self.solve_transposed(x, y),
        )
    }

    #[cfg(test)]
    fn factors_dense(&self) -> (crate::dense::DenseMatrix, crate::dense::DenseMatrix) {
        let mut l = crate::dense::DenseMatrix::identity(self.n);
        let mut u = crate::dense::DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for idx in self.row_offsets[i]..self.row_offsets[i + 1] {
                let j = self.col_indices[idx];
                if j < i {
                    l.set(i, j, self.values[idx]);
                } else {
                    u.set(i, j, self.values[idx]);
                }
            }
        }
        (l, u)
    }
}
