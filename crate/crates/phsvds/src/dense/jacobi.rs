//! Symmetric eigensolver via cyclic Jacobi rotations.
//!
//! Jacobi is slower than tridiagonalization-based methods but it is simple,
//! backward stable, and delivers small eigenvalues with high relative
//! accuracy, which matters when the projected matrix inherits the squared
//! conditioning of the normal equations.

use super::DenseMatrix;

/// Eigendecomposition of a symmetric matrix: eigenvalues ascending and the
/// matching eigenvectors as columns, `H ≈ S diag(w) Sᵀ`.
///
/// The input is symmetrized as `(H + Hᵀ)/2` before the sweeps, so mild
/// asymmetry from accumulated roundoff in the caller is tolerated. Sweeps run
/// until the off-diagonal Frobenius norm falls below `1e-15` of the matrix
/// norm.
pub fn sym_eig(h: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    assert_eq!(h.nrows(), h.ncols(), "sym_eig needs a square matrix");
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), DenseMatrix::zeros(0, 0));
    }

    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (h.get(i, j) + h.get(j, i)));
    let mut s = DenseMatrix::identity(n);

    let norm = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * norm;

    for _sweep in 0..100 {
        if a.off_diagonal_frobenius() <= stop {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // Rotations on entries already at roundoff level only churn.
                if apq.abs() <= 1e-18 * norm {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    // Avoid overflow in theta^2; limit of the exact formula.
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;

                // A <- Jᵀ A J on rows/columns p and q.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - sn * akq);
                    a.set(k, q, sn * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - sn * aqk);
                    a.set(q, k, sn * apk + c * aqk);
                }
                // Pin the rotated 2x2 block to its exact form.
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                let _ = (app, aqq);

                for k in 0..n {
                    let skp = s.get(k, p);
                    let skq = s.get(k, q);
                    s.set(k, p, c * skp - sn * skq);
                    s.set(k, q, sn * skp + c * skq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());

    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| s.get(i, order[j]));
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let raw = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        DenseMatrix::from_fn(n, n, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)))
    }

    fn check_decomposition(h: &DenseMatrix, values: &[f64], s: &DenseMatrix) {
        let n = h.nrows();
        let scale = h.frobenius_norm().max(1.0);
        // Residual H S - S diag(w).
        for j in 0..n {
            let hs = h.matvec(s.col(j));
            for i in 0..n {
                let r = hs[i] - values[j] * s.get(i, j);
                assert!(
                    r.abs() <= 50.0 * 2.22e-16 * scale,
                    "residual {r:e} too large at ({i},{j})"
                );
            }
        }
        // Orthonormality of S.
        for a in 0..n {
            for b in 0..n {
                let d = vecops::dot(s.col(a), s.col(b)) - if a == b { 1.0 } else { 0.0 };
                assert!(d.abs() <= 1e-13, "orthonormality defect {d:e}");
            }
        }
        // Ascending order.
        for w in values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn two_by_two_hand_example() {
        // Eigenvalues of [2 1; 1 2] are 1 and 3.
        let h = DenseMatrix::from_columns(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (w, s) = sym_eig(&h);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 3.0, epsilon = 1e-14);
        check_decomposition(&h, &w, &s);
    }

    #[test]
    fn diagonal_input_is_exact() {
        let d = [3.0, -1.0, 0.5, 7.0];
        let h = DenseMatrix::from_fn(4, 4, |i, j| if i == j { d[i] } else { 0.0 });
        let (w, s) = sym_eig(&h);
        assert_eq!(w, vec![-1.0, 0.5, 3.0, 7.0]);
        check_decomposition(&h, &w, &s);
    }

    #[test]
    fn trace_and_frobenius_are_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 12, 33] {
            let h = random_symmetric(n, &mut rng);
            let (w, s) = sym_eig(&h);
            check_decomposition(&h, &w, &s);
            let trace: f64 = (0..n).map(|i| h.get(i, i)).sum();
            assert_abs_diff_eq!(w.iter().sum::<f64>(), trace, epsilon = 1e-12 * n as f64);
            let fro2: f64 = h.frobenius_norm().powi(2);
            assert_abs_diff_eq!(
                w.iter().map(|v| v * v).sum::<f64>(),
                fro2,
                epsilon = 1e-12 * (n as f64) * fro2.max(1.0)
            );
        }
    }

    #[test]
    fn clustered_eigenvalues_still_orthogonal() {
        // Two nearly equal eigenvalues; the eigenvectors must stay orthogonal.
        let q = {
            let c = (0.3f64).cos();
            let s = (0.3f64).sin();
            DenseMatrix::from_columns(&[vec![c, s, 0.0], vec![-s, c, 0.0], vec![0.0, 0.0, 1.0]])
        };
        let d = DenseMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                [1.0, 1.0 + 1e-13, 2.0][i]
            } else {
                0.0
            }
        });
        let h = q.matmul(&d).matmul(&q.transpose());
        let (w, s) = sym_eig(&h);
        check_decomposition(&h, &w, &s);
        assert_abs_diff_eq!(w[2], 2.0, epsilon = 1e-13);
    }
}
