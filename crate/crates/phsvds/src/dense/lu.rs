//! LU with partial pivoting, used by the shift-and-invert mode on the dense
//! image of the shifted augmented matrix.

use super::DenseMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LuError {
    #[error("matrix is singular to working precision (pivot {pivot} at step {step})")]
    Singular { step: usize, pivot: String },
}

/// Compact LU factorization `PA = LU` of a square matrix.
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &DenseMatrix) -> Result<Self, LuError> {
        assert_eq!(a.nrows(), a.ncols(), "LU needs a square matrix");
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.max_abs().max(f64::MIN_POSITIVE);

        for k in 0..n {
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for i in (k + 1)..n {
                let v = lu.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= (n as f64) * 2.22e-16 * scale {
                return Err(LuError::Singular { step: k, pivot: format!("{best:e}") });
            }
            if p != k {
                perm.swap(k, p);
                for j in 0..n {
                    let t = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, t);
                }
            }
            let pivot = lu.get(k, k);
            for i in (k + 1)..n {
                let factor = lu.get(i, k) / pivot;
                lu.set(i, k, factor);
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        let v = lu.get(i, j) - factor * lu.get(k, j);
                        lu.set(i, j, v);
                    }
                }
            }
        }
        Ok(LuFactors { lu, perm })
    }

    /// Solves `Ax = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // Ly = Pb (unit lower triangle)
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        // Ux = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solve_recovers_known_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1usize, 4, 17, 60] {
            let a = DenseMatrix::from_fn(n, n, |i, j| {
                rng.gen_range(-1.0..1.0) + if i == j { 3.0 } else { 0.0 }
            });
            let x_true: Vec<f64> = (0..n).map(|i| (i as f64) - 0.5 * (n as f64)).collect();
            let b = a.matvec(&x_true);
            let f = LuFactors::factor(&a).unwrap();
            let x = f.solve(&b);
            for (xi, ti) in x.iter().zip(&x_true) {
                assert_abs_diff_eq!(xi, ti, epsilon = 1e-10 * (n as f64));
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = DenseMatrix::from_columns(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let f = LuFactors::factor(&a).unwrap();
        let x = f.solve(&[2.0, 3.0]);
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DenseMatrix::from_columns(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(LuFactors::factor(&a), Err(LuError::Singular { .. })));
    }
}
