//! Thin QR via modified Gram-Schmidt with reorthogonalization, plus the
//! single-column update the refined extraction path leans on: most outer
//! iterations only append one column to `W − σ̃V`, so refactoring the whole
//! thing would waste the work.

use super::DenseMatrix;
use crate::vecops;

/// Signals that a column to be appended lies numerically in the span of the
/// existing Q; the caller decides whether to refactor or perturb.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("new column lies in the span of the current basis")]
pub struct RankDeficiency;

/// Thin QR factorization `A = QR` with `Q` orthonormal (m × n, m ≥ n
/// required) and `R` upper triangular (n × n).
///
/// Numerically dependent columns do not fail: the corresponding `R` diagonal
/// entry is set to zero and the `Q` column is filled with an arbitrary
/// direction orthogonal to the rest, so `QR = A` and `QᵀQ = I` both still
/// hold. Refined extraction depends on that: `‖Ax‖ = ‖Rx‖` must survive even
/// when the shifted basis loses rank near convergence.
pub fn qr_factor(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let m = a.nrows();
    let n = a.ncols();
    assert!(m >= n, "qr_factor needs at least as many rows as columns");

    let mut q = DenseMatrix::zeros(m, 0);
    let mut r = DenseMatrix::zeros(n, n);

    for j in 0..n {
        let mut v = a.col(j).to_vec();
        let vnorm = vecops::norm2(&v);
        let mut coeffs = vec![0.0; j];
        for _pass in 0..2 {
            for (k, c) in coeffs.iter_mut().enumerate().take(j) {
                let proj = vecops::dot(&v, q.col(k));
                vecops::axpy(-proj, q.col(k), &mut v);
                *c += proj;
            }
        }
        for (k, c) in coeffs.iter().enumerate() {
            r.set(k, j, *c);
        }
        let rem = vecops::norm2(&v);
        if rem < deficiency_threshold(m, vnorm) {
            r.set(j, j, 0.0);
            fill_orthogonal_direction(&mut v, &q);
        } else {
            r.set(j, j, rem);
            vecops::scale(1.0 / rem, &mut v);
        }
        q.push_col(&v);
    }
    (q, r)
}

/// Extends `A = QR` by one column: on success `Q` gains a column and `R`
/// grows to `(n+1) × (n+1)`. Returns [`RankDeficiency`] (leaving `Q`, `R`
/// untouched) when `w` is numerically inside span(Q).
pub fn qr_append_column(
    q: &mut DenseMatrix,
    r: &mut DenseMatrix,
    w: &[f64],
) -> Result<(), RankDeficiency> {
    let m = q.nrows();
    let n = q.ncols();
    assert_eq!(r.nrows(), n);
    assert_eq!(r.ncols(), n);
    assert_eq!(w.len(), m, "column length mismatch");

    let mut v = w.to_vec();
    let wnorm = vecops::norm2(&v);
    let mut coeffs = vec![0.0; n];
    for _pass in 0..2 {
        for (k, c) in coeffs.iter_mut().enumerate() {
            let proj = vecops::dot(&v, q.col(k));
            vecops::axpy(-proj, q.col(k), &mut v);
            *c += proj;
        }
    }
    let rem = vecops::norm2(&v);
    if rem < deficiency_threshold(m, wnorm) {
        return Err(RankDeficiency);
    }
    vecops::scale(1.0 / rem, &mut v);

    let mut grown = DenseMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        for i in 0..=j {
            grown.set(i, j, r.get(i, j));
        }
    }
    for (i, c) in coeffs.iter().enumerate() {
        grown.set(i, n, *c);
    }
    grown.set(n, n, rem);

    q.push_col(&v);
    *r = grown;
    Ok(())
}

fn deficiency_threshold(m: usize, colnorm: f64) -> f64 {
    (m as f64) * 2.22e-16 * colnorm
}

fn fill_orthogonal_direction(v: &mut Vec<f64>, q: &DenseMatrix) {
    let m = v.len();
    for e in 0..m {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[e] = 1.0;
        let cols: Vec<&[f64]> = (0..q.ncols()).map(|k| q.col(k)).collect();
        if vecops::orthogonalize_twice(v, &cols) > 0.5 {
            vecops::normalize(v);
            return;
        }
    }
    unreachable!("no orthogonal direction left; basis already square");
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn check_qr(a: &DenseMatrix, q: &DenseMatrix, r: &DenseMatrix) {
        let n = a.ncols();
        let back = q.matmul(r);
        let scale = a.frobenius_norm().max(1.0);
        for j in 0..n {
            for i in 0..a.nrows() {
                assert_abs_diff_eq!(back.get(i, j), a.get(i, j), epsilon = 1e-13 * scale);
            }
        }
        for x in 0..n {
            for y in 0..n {
                let t = if x == y { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(vecops::dot(q.col(x), q.col(y)), t, epsilon = 1e-13);
            }
        }
        for j in 0..n {
            for i in (j + 1)..n {
                assert_eq!(r.get(i, j), 0.0, "R not upper triangular");
            }
        }
    }

    #[test]
    fn factor_random_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, n) in [(1, 1), (6, 3), (10, 10), (40, 35)] {
            let a = DenseMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let (q, r) = qr_factor(&a);
            check_qr(&a, &q, &r);
        }
    }

    #[test]
    fn dependent_column_keeps_q_orthonormal() {
        let c1 = vec![1.0, 1.0, 0.0, 0.0];
        let c2: Vec<f64> = c1.iter().map(|x| 3.0 * x).collect();
        let a = DenseMatrix::from_columns(&[c1, c2]);
        let (q, r) = qr_factor(&a);
        assert_eq!(r.get(1, 1), 0.0);
        check_qr(&a, &q, &r);
    }

    #[test]
    fn append_matches_full_factorization() {
        // Oracle: a fresh factorization of all columns at once.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = 30;
        let cols: Vec<Vec<f64>> =
            (0..8).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();

        let first = DenseMatrix::from_columns(&[cols[0].clone()]);
        let (mut q, mut r) = qr_factor(&first);
        for c in &cols[1..] {
            qr_append_column(&mut q, &mut r, c).unwrap();
        }
        let a = DenseMatrix::from_columns(&cols);
        check_qr(&a, &q, &r);

        let (_, r_full) = qr_factor(&a);
        // R is unique up to column signs; MGS keeps positive diagonals so the
        // two must agree entrywise.
        for j in 0..8 {
            for i in 0..=j {
                assert_abs_diff_eq!(r.get(i, j), r_full.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn append_rejects_dependent_column() {
        let a = DenseMatrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let (mut q, mut r) = qr_factor(&a);
        let w = vec![0.3, -0.7, 0.0]; // inside span(q)
        assert_eq!(qr_append_column(&mut q, &mut r, &w), Err(RankDeficiency));
        assert_eq!(q.ncols(), 2, "failed append must not mutate Q");
        assert_eq!(r.ncols(), 2, "failed append must not mutate R");
    }
}
