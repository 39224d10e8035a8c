//! Small vector helpers shared by the solvers. Everything is plain slices;
//! no attempt at blocking or SIMD beyond what the optimizer finds itself.

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

/// Normalizes `x` in place and returns its original norm.
pub fn normalize(x: &mut [f64]) -> f64 {
    let n = norm2(x);
    if n > 0.0 {
        scale(1.0 / n, x);
    }
    n
}

/// Orthogonalizes `x` against each column in `basis` with two passes of
/// modified Gram-Schmidt. Returns the remaining norm of `x`.
///
/// Two passes are enough to keep the basis orthonormal to machine precision
/// for the basis sizes used here ("twice is enough").
pub fn orthogonalize_twice(x: &mut [f64], basis: &[impl AsRef<[f64]>]) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = dot(x, q.as_ref());
            axpy(-c, q.as_ref(), x);
        }
    }
    norm2(x)
}
