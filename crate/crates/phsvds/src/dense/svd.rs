//! Dense SVD via one-sided Jacobi.
//!
//! Columns of the working matrix are rotated pairwise until mutually
//! orthogonal; their norms are then the singular values. Like its two-sided
//! cousin, one-sided Jacobi computes small singular values to high relative
//! accuracy, which is exactly what the refined extraction path needs from the
//! tiny triangular factors it hands us.

use super::DenseMatrix;
use crate::vecops;

/// Thin SVD `A = U diag(s) Vᵀ` with `min(m, n)` singular values in
/// ascending order. `U` is `m × r`, `V` is `n × r` with orthonormal columns.
///
/// Zero singular values are kept (a zero matrix yields all-zero `s`) and
/// their left vectors are completed to an orthonormal set from coordinate
/// directions.
pub fn svd(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    if a.nrows() >= a.ncols() {
        svd_tall(a)
    } else {
        let (u, s, v) = svd_tall(&a.transpose());
        (v, s, u)
    }
}

fn svd_tall(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let m = a.nrows();
    let n = a.ncols();
    assert!(m >= n);
    if n == 0 {
        return (DenseMatrix::zeros(m, 0), Vec::new(), DenseMatrix::zeros(0, 0));
    }

    let mut g = a.clone();
    let mut v = DenseMatrix::identity(n);

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let gp = g.col(p);
                let gq = g.col(q);
                let app = vecops::dot(gp, gp);
                let aqq = vecops::dot(gq, gq);
                let apq = vecops::dot(gp, gq);
                if apq.abs() <= 1e-16 * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau.abs() > 1e150 {
                    0.5 / tau
                } else {
                    tau.signum() / (tau.abs() + (tau * tau + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = c * t;

                for i in 0..m {
                    let gip = g.get(i, p);
                    let giq = g.get(i, q);
                    g.set(i, p, c * gip - s * giq);
                    g.set(i, q, s * gip + c * giq);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n).map(|j| vecops::norm2(g.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[i].partial_cmp(&sigma[j]).unwrap());

    let mut u = DenseMatrix::zeros(m, n);
    let v_sorted = DenseMatrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    let sigma_sorted: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    sigma = sigma_sorted;

    let mut filled: Vec<usize> = Vec::new();
    for j in 0..n {
        let src = order[j];
        if sigma[j] > 0.0 {
            let col = g.col(src).to_vec();
            let inv = 1.0 / sigma[j];
            for i in 0..m {
                u.set(i, j, col[i] * inv);
            }
            filled.push(j);
        }
    }
    // Left vectors for zero singular values: any orthonormal completion works.
    for j in 0..n {
        if sigma[j] > 0.0 {
            continue;
        }
        let mut dir = vec![0.0; m];
        for e in 0..m {
            dir.iter_mut().for_each(|x| *x = 0.0);
            dir[e] = 1.0;
            let cols: Vec<&[f64]> = filled.iter().map(|&c| u.col(c)).collect();
            let rem = vecops::orthogonalize_twice(&mut dir, &cols);
            if rem > 0.5 {
                vecops::normalize(&mut dir);
                break;
            }
        }
        u.col_mut(j).copy_from_slice(&dir);
        filled.push(j);
    }

    (u, sigma, v_sorted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn reconstruct(u: &DenseMatrix, s: &[f64], v: &DenseMatrix) -> DenseMatrix {
        let r = s.len();
        let mut us = DenseMatrix::zeros(u.nrows(), r);
        for j in 0..r {
            for i in 0..u.nrows() {
                us.set(i, j, u.get(i, j) * s[j]);
            }
        }
        us.matmul(&v.transpose())
    }

    fn check_svd(a: &DenseMatrix) {
        let (u, s, v) = svd(a);
        let r = a.nrows().min(a.ncols());
        assert_eq!(s.len(), r);
        for w in s.windows(2) {
            assert!(w[0] <= w[1], "singular values not ascending");
        }
        let back = reconstruct(&u, &s, &v);
        let scale = a.frobenius_norm().max(1.0);
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                assert_abs_diff_eq!(back.get(i, j), a.get(i, j), epsilon = 1e-13 * scale);
            }
        }
        for x in 0..r {
            for y in 0..r {
                let target = if x == y { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(
                    crate::vecops::dot(u.col(x), u.col(y)),
                    target,
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    crate::vecops::dot(v.col(x), v.col(y)),
                    target,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn diagonal_rectangular() {
        let a = DenseMatrix::from_fn(4, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 });
        let (_, s, _) = svd(&a);
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[2], 3.0, epsilon = 1e-14);
        check_svd(&a);
    }

    #[test]
    fn zero_matrix_yields_zero_sigma() {
        let a = DenseMatrix::zeros(5, 3);
        let (u, s, _) = svd(&a);
        assert!(s.iter().all(|&x| x == 0.0));
        // Completed U must still be orthonormal.
        for x in 0..3 {
            for y in 0..3 {
                let target = if x == y { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(
                    crate::vecops::dot(u.col(x), u.col(y)),
                    target,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn wide_matrices_transpose_correctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DenseMatrix::from_fn(3, 7, |_, _| rng.gen_range(-2.0..2.0));
        check_svd(&a);
    }

    #[test]
    fn random_shapes_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n) in [(1, 1), (5, 5), (12, 4), (4, 12), (20, 17), (33, 35)] {
            let a = DenseMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            check_svd(&a);
        }
    }

    #[test]
    fn rank_deficient_column() {
        // Third column is a multiple of the first: one exact zero sigma up to
        // roundoff.
        let c1 = vec![1.0, 2.0, 0.5, -1.0];
        let c2 = vec![0.0, 1.0, 1.0, 1.0];
        let c3: Vec<f64> = c1.iter().map(|x| -2.0 * x).collect();
        let a = DenseMatrix::from_columns(&[c1, c2, c3]);
        let (_, s, _) = svd(&a);
        assert!(s[0] <= 1e-14 * a.frobenius_norm());
        check_svd(&a);
    }

    #[test]
    fn matches_normal_equations_spectrum() {
        // Cross-check: squared singular values are the eigenvalues of AᵀA.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = DenseMatrix::from_fn(9, 6, |_, _| rng.gen_range(-1.0..1.0));
        let (_, s, _) = svd(&a);
        let ata = a.transpose().matmul(&a);
        let (w, _) = super::super::sym_eig(&ata);
        for (sig, lam) in s.iter().zip(w.iter()) {
            assert_abs_diff_eq!(sig * sig, *lam, epsilon = 1e-12 * w.last().unwrap().max(1.0));
        }
    }
}
