//! Compressed sparse row storage and the two matrix-vector products the whole
//! solver is built on.

use crate::dense::DenseMatrix;

/// Sparse matrix in CSR form.
///
/// Invariants, enforced by the constructors: `row_offsets` has `nrows + 1`
/// monotone entries ending at `nnz`, column indices are strictly increasing
/// inside each row, and no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from (row, col, value) triplets. Duplicates are
    /// summed; entries whose final sum is exactly zero are dropped.
    ///
    /// Panics if an index is out of bounds — triplets come from code, not
    /// from files; the Matrix Market reader does its own validated conversion.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            assert!(i < nrows && j < ncols, "triplet index ({i},{j}) out of bounds");
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());

        let mut k = 0;
        while k < entries.len() {
            let (i, j, mut v) = entries[k];
            k += 1;
            while k < entries.len() && entries[k].0 == i && entries[k].1 == j {
                v += entries[k].2;
                k += 1;
            }
            if v != 0.0 {
                row_offsets[i + 1] += 1;
                col_indices.push(j);
                values.push(v);
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        SparseMatrix { nrows, ncols, row_offsets, col_indices, values }
    }

    /// Square matrix with the given diagonal (zeros are dropped).
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// (column index, value) pairs of row `i`, ascending in column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub(crate) fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub(crate) fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    /// y = A x. Accumulation runs left to right within each row, so results
    /// are bit-reproducible across runs.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "spmv: x has wrong length");
        assert_eq!(y.len(), self.nrows, "spmv: y has wrong length");
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            y[i] = acc;
        }
    }

    /// y = Aᵀ x, scattering row by row in index order (deterministic).
    pub fn spmv_t(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows, "spmv_t: x has wrong length");
        assert_eq!(y.len(), self.ncols, "spmv_t: y has wrong length");
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                y[self.col_indices[k]] += self.values[k] * xi;
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                triplets.push((j, i, v));
            }
        }
        SparseMatrix::from_triplets(self.ncols, self.nrows, triplets)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// Frobenius norm; handy as a cheap scale estimate.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared column norms, i.e. the diagonal of AᵀA.
    pub fn column_norms_squared(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (j, v) in (0..self.nrows).flat_map(|i| self.row(i)) {
            out[j] += v * v;
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows.min(self.ncols)];
        for i in 0..d.len() {
            for (j, v) in self.row(i) {
                if j == i {
                    d[i] = v;
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::{prop_assert, proptest};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 5.0), (1, 1, -5.0), (1, 0, 3.0)],
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(0, 3.0)]);
        assert_eq!(m.row(1).collect::<Vec<_>>(), vec![(0, 3.0)]);
    }

    #[test]
    fn csr_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trips: Vec<(usize, usize, f64)> = (0..200)
            .map(|_| (rng.gen_range(0..13), rng.gen_range(0..9), rng.gen_range(-1.0..1.0)))
            .collect();
        let m = SparseMatrix::from_triplets(13, 9, trips);
        assert_eq!(m.row_offsets().len(), 14);
        assert_eq!(*m.row_offsets().last().unwrap(), m.nnz());
        for i in 0..13 {
            let cols: Vec<usize> = m.row(i).map(|(j, _)| j).collect();
            for w in cols.windows(2) {
                assert!(w[0] < w[1], "columns not strictly increasing in row {i}");
            }
        }
        assert!(m.values().iter().all(|&v| v != 0.0));
    }

    #[test]
    fn transpose_is_involution() {
        let m = SparseMatrix::from_triplets(3, 5, vec![(0, 4, 1.5), (2, 0, -2.0), (1, 2, 0.25)]);
        assert_eq!(m.transpose().transpose(), m);
    }

    proptest! {
        // spmv and spmv_t against a dense reference multiply.
        #[test]
        fn matvec_matches_dense(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.gen_range(1..20usize);
            let n = rng.gen_range(1..20usize);
            let trips: Vec<(usize, usize, f64)> = (0..(m * n / 3).max(1))
                .map(|_| (rng.gen_range(0..m), rng.gen_range(0..n), rng.gen_range(-1.0..1.0)))
                .collect();
            let a = SparseMatrix::from_triplets(m, n, trips);
            let d = a.to_dense();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let mut y = vec![0.0; m];
            a.spmv(&x, &mut y);
            let y_ref = d.matvec(&x);
            for (a, b) in y.iter().zip(&y_ref) {
                prop_assert!((a - b).abs() <= 1e-12);
            }

            let mut yt = vec![0.0; n];
            a.spmv_t(&z, &mut yt);
            let yt_ref = d.tr_matvec(&z);
            for (a, b) in yt.iter().zip(&yt_ref) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        // <Ax, y> == <x, Aᵀy> for random vectors.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = SparseMatrix::from_triplets(
            8,
            6,
            (0..20).map(|_| {
                (rng.gen_range(0..8usize), rng.gen_range(0..6usize), rng.gen_range(-1.0..1.0))
            }),
        );
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut ax = vec![0.0; 8];
        a.spmv(&x, &mut ax);
        let mut aty = vec![0.0; 6];
        a.spmv_t(&y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(p, q)| p * q).sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn column_norms_match_dense() {
        let a = SparseMatrix::from_triplets(3, 2, vec![(0, 0, 3.0), (2, 0, 4.0), (1, 1, 2.0)]);
        assert_eq!(a.column_norms_squared(), vec![25.0, 4.0]);
    }
}
