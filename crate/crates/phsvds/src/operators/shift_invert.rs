//! Dense shift-and-invert operators for the smallest singular values.
//!
//! Inverting turns an interior/smallest-eigenvalue problem into an extreme
//! one: the eigensolver runs on the inverted operator looking for its
//! largest eigenvalues and [`ShiftInvertOperator::map_eigenvalue`] maps them
//! back to singular values of `A`. Two factorizations are offered:
//!
//! - `QrOfA`: `(AᵀA)⁻¹ = R⁻¹R⁻ᵀ` from a QR factorization of the tall
//!   orientation of `A`. Only the unshifted problem makes sense here, and
//!   an eigenvalue `λ` maps back as `σ = 1/√λ`.
//! - `LuOfB`: `(B − shift·I)⁻¹` from an LU factorization of the dense
//!   augmented matrix; `λ` maps back as `σ = shift + 1/λ`. A rectangular
//!   `A` makes `B` itself singular, so this mode needs either a square
//!   input or a nonzero shift.
//!
//! Both assemble a dense factorization, so they are guarded by a size limit
//! rather than pretending to scale.

use super::LinearOperator;
use crate::dense::{qr_factor, DenseMatrix, LuFactors};
use crate::sparse::SparseMatrix;
use thiserror::Error;

/// Largest matrix order the dense factorizations will accept.
pub const DENSE_FACTOR_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftInvertMode {
    /// `(AᵀA)⁻¹` via QR of `A`; shift must be zero.
    QrOfA,
    /// `(B − shift·I)⁻¹` via dense LU of the augmented matrix.
    LuOfB,
}

#[derive(Debug, Error)]
pub enum ShiftInvertError {
    #[error("QR-based inversion supports only shift 0, got {shift}")]
    NonzeroShift { shift: f64 },
    #[error("matrix of order {dim} exceeds the dense factorization limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("shifted matrix is singular: {0}")]
    Singular(String),
}

enum Factors {
    /// Upper-triangular `R` with `AᵀA = RᵀR` (tall orientation).
    NormalEq { r: DenseMatrix },
    Augmented { lu: LuFactors, dim: usize },
}

pub struct ShiftInvertOperator {
    factors: Factors,
    shift: f64,
}

/// Factors once up front; `apply` is then a pair of triangular solves
/// (`QrOfA`) or one LU solve (`LuOfB`).
pub fn shift_invert_operator(
    a: &SparseMatrix,
    mode: ShiftInvertMode,
    shift: f64,
) -> Result<ShiftInvertOperator, ShiftInvertError> {
    match mode {
        ShiftInvertMode::QrOfA => {
            if shift != 0.0 {
                return Err(ShiftInvertError::NonzeroShift { shift });
            }
            let long_side = a.nrows().max(a.ncols());
            if long_side > DENSE_FACTOR_LIMIT {
                return Err(ShiftInvertError::TooLarge {
                    dim: long_side,
                    limit: DENSE_FACTOR_LIMIT,
                });
            }
            let tall = if a.nrows() >= a.ncols() { a.to_dense() } else { a.to_dense().transpose() };
            let (_, r) = qr_factor(&tall);
            for j in 0..r.ncols() {
                if r.get(j, j) == 0.0 {
                    return Err(ShiftInvertError::Singular(format!(
                        "column {j} of R is numerically zero (rank-deficient input)"
                    )));
                }
            }
            Ok(ShiftInvertOperator { factors: Factors::NormalEq { r }, shift })
        }
        ShiftInvertMode::LuOfB => {
            let dim = a.nrows() + a.ncols();
            if dim > DENSE_FACTOR_LIMIT {
                return Err(ShiftInvertError::TooLarge { dim, limit: DENSE_FACTOR_LIMIT });
            }
            let n = a.ncols();
            let mut b = DenseMatrix::zeros(dim, dim);
            for i in 0..a.nrows() {
                for (j, v) in a.row(i) {
                    b.set(n + i, j, v);
                    b.set(j, n + i, v);
                }
            }
            for d in 0..dim {
                b.set(d, d, b.get(d, d) - shift);
            }
            let lu = LuFactors::factor(&b).map_err(|e| ShiftInvertError::Singular(e.to_string()))?;
            Ok(ShiftInvertOperator { factors: Factors::Augmented { lu, dim }, shift })
        }
    }
}

impl ShiftInvertOperator {
    pub fn mode(&self) -> ShiftInvertMode {
        match self.factors {
            Factors::NormalEq { .. } => ShiftInvertMode::QrOfA,
            Factors::Augmented { .. } => ShiftInvertMode::LuOfB,
        }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Maps an eigenvalue of this (inverted) operator back to a singular
    /// value of the original matrix. Non-invertible inputs map to infinity
    /// rather than panicking, since Ritz values can stray during iteration.
    pub fn map_eigenvalue(&self, lambda: f64) -> f64 {
        match self.factors {
            Factors::NormalEq { .. } => {
                if lambda > 0.0 {
                    1.0 / lambda.sqrt()
                } else {
                    f64::INFINITY
                }
            }
            Factors::Augmented { .. } => {
                if lambda != 0.0 {
                    self.shift + 1.0 / lambda
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

impl LinearOperator for ShiftInvertOperator {
    fn dim_in(&self) -> usize {
        match &self.factors {
            Factors::NormalEq { r } => r.ncols(),
            Factors::Augmented { dim, .. } => *dim,
        }
    }

    fn dim_out(&self) -> usize {
        self.dim_in()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match &self.factors {
            Factors::NormalEq { r } => {
                let n = r.ncols();
                // Rᵀ z = x, forward: column i of R is row i of Rᵀ.
                let mut z = vec![0.0; n];
                for i in 0..n {
                    let col = r.col(i);
                    let mut s = x[i];
                    for j in 0..i {
                        s -= col[j] * z[j];
                    }
                    z[i] = s / col[i];
                }
                // R y = z, backward with column-oriented scatter.
                y.copy_from_slice(&z);
                for j in (0..n).rev() {
                    let col = r.col(j);
                    y[j] /= col[j];
                    let yj = y[j];
                    for i in 0..j {
                        y[i] -= col[i] * yj;
                    }
                }
            }
            Factors::Augmented { lu, .. } => {
                y.copy_from_slice(&lu.solve(x));
            }
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(m: usize, n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t: Vec<(usize, usize, f64)> = (0..2 * m * n / 3)
            .map(|_| (rng.gen_range(0..m), rng.gen_range(0..n), rng.gen_range(-1.0..1.0)))
            .collect();
        // Keep the short dimension well conditioned.
        for d in 0..m.min(n) {
            t.push((d, d, 2.0));
        }
        SparseMatrix::from_triplets(m, n, t)
    }

    fn operator_as_dense(op: &dyn LinearOperator) -> DenseMatrix {
        let n = op.dim_in();
        let mut d = DenseMatrix::zeros(op.dim_out(), n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let mut col = vec![0.0; n];
            op.apply(&e, &mut col);
            d.col_mut(j).copy_from_slice(&col);
        }
        d
    }

    fn dense_inverse(a: &DenseMatrix) -> DenseMatrix {
        let n = a.nrows();
        let lu = LuFactors::factor(a).unwrap();
        let mut inv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            inv.col_mut(j).copy_from_slice(&lu.solve(&e));
        }
        inv
    }

    #[test]
    fn qr_mode_inverts_normal_equations() {
        let a = random_sparse(8, 5, 1);
        let op = shift_invert_operator(&a, ShiftInvertMode::QrOfA, 0.0).unwrap();
        assert_eq!(op.dim_in(), 5);
        let dense = a.to_dense();
        let want = dense_inverse(&dense.transpose().matmul(&dense));
        let got = operator_as_dense(&op);
        let scale = want.max_abs();
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!(got.get(i, j), want.get(i, j), epsilon = 1e-10 * scale);
            }
        }
    }

    #[test]
    fn qr_mode_uses_short_dimension_of_wide_input() {
        let a = random_sparse(4, 7, 2);
        let op = shift_invert_operator(&a, ShiftInvertMode::QrOfA, 0.0).unwrap();
        assert_eq!(op.dim_in(), 4);
        let dense = a.to_dense();
        let want = dense_inverse(&dense.matmul(&dense.transpose()));
        let got = operator_as_dense(&op);
        let scale = want.max_abs();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(got.get(i, j), want.get(i, j), epsilon = 1e-10 * scale);
            }
        }
    }

    #[test]
    fn qr_mode_rejects_nonzero_shift() {
        let a = random_sparse(5, 5, 3);
        match shift_invert_operator(&a, ShiftInvertMode::QrOfA, 0.5) {
            Err(ShiftInvertError::NonzeroShift { shift }) => assert_eq!(shift, 0.5),
            _ => panic!("expected a shift rejection"),
        }
    }

    #[test]
    fn lu_mode_matches_dense_inverse_of_shifted_augmented() {
        let a = random_sparse(5, 5, 4);
        let shift = 0.3;
        let op = shift_invert_operator(&a, ShiftInvertMode::LuOfB, shift).unwrap();
        assert_eq!(op.dim_in(), 10);
        let dense = a.to_dense();
        let mut b = DenseMatrix::zeros(10, 10);
        for i in 0..5 {
            for j in 0..5 {
                b.set(5 + i, j, dense.get(i, j));
                b.set(j, 5 + i, dense.get(i, j));
            }
        }
        for d in 0..10 {
            b.set(d, d, b.get(d, d) - shift);
        }
        let want = dense_inverse(&b);
        let got = operator_as_dense(&op);
        let scale = want.max_abs();
        for i in 0..10 {
            for j in 0..10 {
                assert_abs_diff_eq!(got.get(i, j), want.get(i, j), epsilon = 1e-10 * scale);
            }
        }
    }

    #[test]
    fn lu_mode_rejects_rectangular_input_at_zero_shift() {
        // A rectangular augmented matrix has |m − n| zero eigenvalues, so it
        // is singular without a shift.
        let a = random_sparse(6, 4, 5);
        match shift_invert_operator(&a, ShiftInvertMode::LuOfB, 0.0) {
            Err(ShiftInvertError::Singular(_)) => {}
            _ => panic!("expected a singularity report"),
        }
    }

    #[test]
    fn eigenvalue_maps_recover_singular_values() {
        let a = random_sparse(6, 6, 6);
        let qr = shift_invert_operator(&a, ShiftInvertMode::QrOfA, 0.0).unwrap();
        assert_abs_diff_eq!(qr.map_eigenvalue(4.0), 0.5, epsilon = 1e-15);
        assert_eq!(qr.map_eigenvalue(-1.0), f64::INFINITY);
        let lu = shift_invert_operator(&a, ShiftInvertMode::LuOfB, 0.3).unwrap();
        assert_abs_diff_eq!(lu.map_eigenvalue(2.0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn size_limit_is_enforced_before_assembly() {
        let a = SparseMatrix::from_diagonal(&vec![1.0; 2600]);
        match shift_invert_operator(&a, ShiftInvertMode::LuOfB, 0.1) {
            Err(ShiftInvertError::TooLarge { dim, limit }) => {
                assert_eq!(dim, 5200);
                assert_eq!(limit, DENSE_FACTOR_LIMIT);
            }
            _ => panic!("expected a size rejection"),
        }
        let tall = SparseMatrix::from_triplets(5001, 1, vec![(0, 0, 1.0)]);
        assert!(matches!(
            shift_invert_operator(&tall, ShiftInvertMode::QrOfA, 0.0),
            Err(ShiftInvertError::TooLarge { .. })
        ));
    }
}
