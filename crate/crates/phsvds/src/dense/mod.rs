//! Dense kernels for the small projected problems.
//!
//! Search spaces are capped at a few dozen vectors, so everything the outer
//! solvers project onto is tiny and dense: the Rayleigh quotient matrix, the
//! QR factor used by refined extraction, the shifted matrices handled by the
//! shift-and-invert modes. These kernels are written for that regime
//! (dimensions up to a few hundred) and favor robustness over speed.

mod jacobi;
mod lu;
mod qr;
mod svd;
pub(crate) mod tridiag;

pub use jacobi::sym_eig;
pub use lu::LuFactors;
pub use qr::{qr_append_column, qr_factor, RankDeficiency};
pub use svd::svd;

use crate::vecops;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from column slices; all columns must share one length.
    pub fn from_columns(cols: &[impl AsRef<[f64]>]) -> Self {
        assert!(!cols.is_empty(), "from_columns needs at least one column");
        let nrows = cols[0].as_ref().len();
        let mut data = Vec::with_capacity(nrows * cols.len());
        for c in cols {
            assert_eq!(c.as_ref().len(), nrows, "ragged columns");
            data.extend_from_slice(c.as_ref());
        }
        DenseMatrix { nrows, ncols: cols.len(), data }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.data[j * self.nrows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.data[j * self.nrows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        debug_assert!(j < self.ncols);
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        debug_assert!(j < self.ncols);
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    /// Appends a column (cheap in column-major layout).
    pub fn push_col(&mut self, col: &[f64]) {
        assert_eq!(col.len(), self.nrows, "column length mismatch");
        self.data.extend_from_slice(col);
        self.ncols += 1;
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.ncols, self.nrows);
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// y = self * x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            vecops::axpy(x[j], self.col(j), &mut y);
        }
        y
    }

    /// y = selfᵀ * x
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols).map(|j| vecops::dot(self.col(j), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul shape mismatch");
        let mut out = Self::zeros(self.nrows, other.ncols);
        for j in 0..other.ncols {
            let y = self.matvec(other.col(j));
            out.col_mut(j).copy_from_slice(&y);
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |off-diagonal| relative measure used by the Jacobi sweeps.
    pub(crate) fn off_diagonal_frobenius(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                if i != j {
                    let v = self.get(i, j);
                    s += v * v;
                }
            }
        }
        s.sqrt()
    }
}
