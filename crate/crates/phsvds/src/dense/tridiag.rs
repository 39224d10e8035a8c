//! Symmetric tridiagonal eigen-utilities for the unrestarted Krylov
//! baselines: Sturm-count bisection for a single targeted eigenvalue and
//! inverse iteration for its eigenvector. Running these once per step keeps
//! long Lanczos histories affordable where a full dense solve per step would
//! not be.

/// Number of eigenvalues of `T` strictly below `x` (Sturm count via the
/// shifted LDLᵀ recurrence). `d` is the diagonal, `e` the off-diagonal.
pub fn count_below(d: &[f64], e: &[f64], x: f64) -> usize {
    let n = d.len();
    debug_assert_eq!(e.len(), n.saturating_sub(1));
    let pivmin = pivot_floor(e);
    let mut t = d[0] - x;
    let mut count = usize::from(t < 0.0);
    for i in 1..n {
        if t.abs() < pivmin {
            t = -pivmin;
        }
        t = d[i] - x - e[i - 1] * e[i - 1] / t;
        if t < 0.0 {
            count += 1;
        }
    }
    count
}

/// k-th smallest eigenvalue (0-based) by bisection.
pub fn eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let n = d.len();
    assert!(k < n);
    if n == 1 {
        return d[0];
    }
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i < n - 1 { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    lo -= 1e-15 * span;
    hi += 1e-15 * span;
    for _ in 0..140 {
        let mid = 0.5 * (lo + hi);
        if count_below(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 * lo.abs().max(hi.abs()).max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvector for an eigenvalue computed by [`eigenvalue`], via a few steps
/// of inverse iteration with a pivoted tridiagonal solve. Returned normalized.
pub fn eigenvector(d: &[f64], e: &[f64], lambda: f64) -> Vec<f64> {
    let n = d.len();
    if n == 1 {
        return vec![1.0];
    }
    // Deterministic start with no structural zeros or symmetries.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * ((i as f64) + 1.0).sin()).collect();
    normalize(&mut x);
    for _ in 0..4 {
        solve_shifted(d, e, lambda, &mut x);
        normalize(&mut x);
        // One extra digit check: stop early if the residual is at noise level.
        if residual_norm(d, e, lambda, &x) <= 1e-14 * scale_of(d, e) {
            break;
        }
    }
    x
}

fn scale_of(d: &[f64], e: &[f64]) -> f64 {
    d.iter().chain(e.iter()).fold(1e-300, |m, v| m.max(v.abs()))
}

fn residual_norm(d: &[f64], e: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let n = d.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut r = (d[i] - lambda) * x[i];
        if i > 0 {
            r += e[i - 1] * x[i - 1];
        }
        if i < n - 1 {
            r += e[i] * x[i + 1];
        }
        s += r * r;
    }
    s.sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

fn pivot_floor(e: &[f64]) -> f64 {
    let emax = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (emax * emax * 2.22e-16).max(f64::MIN_POSITIVE)
}

/// Solves `(T - lambda I) y = x` in place with adjacent-row pivoting, leaving
/// the solution in `x`. Exact singularity is deflected with a tiny pivot —
/// for inverse iteration that only steers growth into the wanted direction.
fn solve_shifted(d: &[f64], e: &[f64], lambda: f64, x: &mut [f64]) {
    let n = d.len();
    let pivmin = pivot_floor(e).max(2.22e-16 * scale_of(d, e));
    let mut diag: Vec<f64> = d.iter().map(|v| v - lambda).collect();
    let mut sup1: Vec<f64> = (0..n - 1).map(|i| e[i]).collect();
    sup1.push(0.0);
    let mut sup2 = vec![0.0; n];

    for i in 0..n - 1 {
        let sub = e[i];
        if diag[i].abs() >= sub.abs() {
            let piv = if diag[i].abs() < pivmin { pivmin.copysign(diag[i]) } else { diag[i] };
            diag[i] = piv;
            let f = sub / piv;
            diag[i + 1] -= f * sup1[i];
            sup1[i + 1] -= f * sup2[i];
            x[i + 1] -= f * x[i];
        } else {
            // Swap rows i and i+1, then eliminate.
            let (ri0, ri1, ri2, bi) = (sub, diag[i + 1], sup1[i + 1], x[i + 1]);
            let (rj0, rj1, rj2, bj) = (diag[i], sup1[i], sup2[i], x[i]);
            diag[i] = ri0;
            sup1[i] = ri1;
            sup2[i] = ri2;
            x[i] = bi;
            let f = rj0 / ri0;
            diag[i + 1] = rj1 - f * ri1;
            sup1[i + 1] = rj2 - f * ri2;
            x[i + 1] = bj - f * bi;
        }
    }
    if diag[n - 1].abs() < pivmin {
        diag[n - 1] = pivmin.copysign(diag[n - 1]);
    }
    // Back substitution over three bands.
    x[n - 1] /= diag[n - 1];
    if n >= 2 {
        x[n - 2] = (x[n - 2] - sup1[n - 2] * x[n - 1]) / diag[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - sup1[i] * x[i + 1] - sup2[i] * x[i + 2]) / diag[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{sym_eig, DenseMatrix};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dense_of(d: &[f64], e: &[f64]) -> DenseMatrix {
        let n = d.len();
        DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                d[i]
            } else if i + 1 == j {
                e[i]
            } else if j + 1 == i {
                e[j]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn bisection_matches_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [1usize, 2, 3, 8, 25] {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let e: Vec<f64> = (0..n.saturating_sub(1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (w, _) = sym_eig(&dense_of(&d, &e));
            for k in 0..n {
                assert_abs_diff_eq!(eigenvalue(&d, &e, k), w[k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eigenvector_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
        let e: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for k in [0, n / 2, n - 1] {
            let lam = eigenvalue(&d, &e, k);
            let x = eigenvector(&d, &e, lam);
            assert!(residual_norm(&d, &e, lam, &x) <= 1e-10 * scale_of(&d, &e));
        }
    }
}
