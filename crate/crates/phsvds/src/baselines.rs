//! Unrestarted Krylov baselines used as measurement yardsticks.
//!
//! Both methods keep the entire basis with full reorthogonalization and
//! never restart, so their iteration counts reflect pure Krylov-subspace
//! quality: the best any restarted method over the same operator could
//! hope to match. Convergence is judged on the same user-facing criteria
//! as the main driver, which makes matvec counts directly comparable.
//!
//! [`lanczos_unrestarted`] runs on any symmetric operator, probing one
//! targeted eigenvalue per step of the growing tridiagonal matrix by Sturm
//! bisection so a long history stays affordable. [`lbd_unrestarted`] runs
//! Golub–Kahan bidiagonalization on a sparse matrix directly; from the
//! same starting vector its right-subspace is mathematically identical to
//! Lanczos on the normal equations, which the tests pin down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{svd, tridiag, DenseMatrix};
use crate::eigensolver::TolRule;
use crate::operators::LinearOperator;
use crate::sparse::SparseMatrix;
use crate::vecops::{axpy, dot, normalize, orthogonalize_twice, scale};
use crate::EPS;

/// Which Ritz values the unrestarted Lanczos run tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LanczosTarget {
    /// The `num_pairs` smallest eigenvalues.
    Smallest,
    /// The `num_pairs` largest eigenvalues.
    Largest,
    /// The first `num_pairs` eigenvalues at or above the given value,
    /// ascending. On an operator with a signed spectrum this picks the
    /// non-negative branch when given `0.0`.
    FirstAbove(f64),
}

/// Knobs for [`lanczos_unrestarted`].
#[derive(Debug, Clone)]
pub struct LanczosConfig {
    /// How many eigenpairs must converge before stopping.
    pub num_pairs: usize,
    /// Which part of the spectrum to watch.
    pub target: LanczosTarget,
    /// Relative tolerance, interpreted through `tol_rule`.
    pub tol: f64,
    /// Same stopping semantics as the main eigensolver: fixed-relative
    /// `‖r‖ < tol·‖op‖`, or the normal-equations dynamic rule
    /// `‖r‖ < tol·√θ·√‖op‖` with a machine-precision floor.
    pub tol_rule: TolRule,
    /// Prior estimate of the operator norm, refined by the run.
    pub norm_est_init: f64,
    /// Hard cap on Lanczos steps (one operator application each).
    pub max_steps: usize,
    /// Seed for the random start when none is supplied.
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig {
            num_pairs: 1,
            target: LanczosTarget::Smallest,
            tol: 1e-8,
            tol_rule: TolRule::FixedRelative,
            norm_est_init: 0.0,
            max_steps: 10_000,
            seed: 0x5eed,
        }
    }
}

/// Result of an unrestarted Lanczos run.
#[derive(Debug, Clone)]
pub struct LanczosOutcome {
    /// Converged (or best-available) eigenvalue estimates in target order.
    pub values: Vec<f64>,
    /// Ritz vectors matching `values`, unit length.
    pub vectors: Vec<Vec<f64>>,
    /// Residual estimates `β_k·|last coefficient|` matching `values`.
    pub residual_norms: Vec<f64>,
    /// Steps taken (basis size at exit).
    pub steps: usize,
    /// Operator applications, weighted by `matvec_cost`.
    pub matvecs: usize,
    /// Whether every tracked pair met the stopping rule.
    pub converged: bool,
    /// Largest absolute Ritz value seen (monotone).
    pub norm_est: f64,
    /// Residual estimate of the primary target after each step (`NaN`
    /// while the target does not exist in the small matrix yet).
    pub trace: Vec<f64>,
}

/// Lanczos with full reorthogonalization and no restarts.
///
/// Each step applies the operator once, extends the tridiagonal matrix,
/// and probes the tracked eigenvalues by bisection; the run stops as soon
/// as every tracked pair passes the stopping rule, the space breaks down
/// (invariant subspace), or `max_steps` is hit.
pub fn lanczos_unrestarted(
    op: &dyn LinearOperator,
    start: Option<&[f64]>,
    cfg: &LanczosConfig,
) -> LanczosOutcome {
    let dim = op.dim_in();
    assert!(op.is_symmetric(), "lanczos_unrestarted needs a symmetric operator");
    assert!(cfg.num_pairs >= 1 && cfg.num_pairs <= dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v1 = match start {
        Some(s) => s.to_vec(),
        None => (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    if normalize(&mut v1) == 0.0 {
        v1 = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut v1);
    }

    let mut basis: Vec<Vec<f64>> = vec![v1];
    let mut d: Vec<f64> = Vec::new();
    let mut e: Vec<f64> = Vec::new();
    let mut matvecs = 0usize;
    let mut norm_est = cfg.norm_est_init.max(0.0);
    let mut converged = false;
    let mut trace = Vec::new();
    let step_cap = cfg.max_steps.min(dim).max(1);

    // Every exit leaves `d`/`e` describing the current square tridiagonal
    // matrix (the basis is only extended once the step is accepted); the
    // loop yields the coupling to the discarded next direction.
    let beta_last = loop {
        let j = basis.len();
        let mut w = op.apply_vec(&basis[j - 1]);
        matvecs += op.matvec_cost();
        let alpha = dot(&w, &basis[j - 1]);
        d.push(alpha);
        // Explicit three-term subtraction keeps the reorthogonalization
        // pass working on an already-small remainder.
        axpy(-alpha, &basis[j - 1], &mut w);
        if j >= 2 {
            axpy(-e[j - 2], &basis[j - 2], &mut w);
        }
        let beta = orthogonalize_twice(&mut w, &basis);

        let lo = tridiag::eigenvalue(&d, &e, 0);
        let hi = tridiag::eigenvalue(&d, &e, d.len() - 1);
        norm_est = norm_est.max(lo.abs()).max(hi.abs());

        match target_indices(&d, &e, cfg.target, 1).first() {
            Some(&i0) => {
                let theta = tridiag::eigenvalue(&d, &e, i0);
                let s = tridiag::eigenvector(&d, &e, theta);
                trace.push(beta * s[d.len() - 1].abs());
            }
            None => trace.push(f64::NAN),
        }

        if d.len() >= cfg.num_pairs {
            let idxs = target_indices(&d, &e, cfg.target, cfg.num_pairs);
            let mut all_ok = idxs.len() == cfg.num_pairs;
            for &i in &idxs {
                let theta = tridiag::eigenvalue(&d, &e, i);
                let s = tridiag::eigenvector(&d, &e, theta);
                let resid = beta * s[d.len() - 1].abs();
                if resid >= threshold(cfg, theta, norm_est) {
                    all_ok = false;
                    break;
                }
            }
            if all_ok {
                converged = true;
                break beta;
            }
        }

        if beta <= (dim as f64) * EPS * norm_est.max(1e-300) {
            // Invariant subspace before the request was met: the pairs in
            // it are exact, but there are fewer directions than asked for
            // (otherwise the probe above would already have passed).
            break 0.0;
        }
        if d.len() >= step_cap {
            break beta;
        }
        scale(1.0 / beta, &mut w);
        e.push(beta);
        basis.push(w);
    };

    // Final extraction from the last tridiagonal matrix.
    let idxs = target_indices(&d, &e, cfg.target, cfg.num_pairs.min(d.len()));
    let mut values = Vec::with_capacity(idxs.len());
    let mut vectors = Vec::with_capacity(idxs.len());
    let mut residual_norms = Vec::with_capacity(idxs.len());
    for &i in &idxs {
        let theta = tridiag::eigenvalue(&d, &e, i);
        let s = tridiag::eigenvector(&d, &e, theta);
        let mut x = vec![0.0; dim];
        for (c, vb) in s.iter().zip(&basis) {
            axpy(*c, vb, &mut x);
        }
        normalize(&mut x);
        values.push(theta);
        vectors.push(x);
        residual_norms.push(beta_last * s[d.len() - 1].abs());
    }

    LanczosOutcome {
        values,
        vectors,
        residual_norms,
        steps: d.len(),
        matvecs,
        converged,
        norm_est,
        trace,
    }
}

fn target_indices(d: &[f64], e: &[f64], target: LanczosTarget, num: usize) -> Vec<usize> {
    let n = d.len();
    let num = num.min(n);
    match target {
        LanczosTarget::Smallest => (0..num).collect(),
        LanczosTarget::Largest => (n - num..n).collect(),
        LanczosTarget::FirstAbove(s) => {
            let first = tridiag::count_below(d, e, s);
            (first..(first + num).min(n)).collect()
        }
    }
}

fn threshold(cfg: &LanczosConfig, theta: f64, norm_est: f64) -> f64 {
    match cfg.tol_rule {
        TolRule::FixedRelative => cfg.tol * norm_est,
        TolRule::NormalEqDynamic => {
            let rel = cfg.tol * theta.max(0.0).sqrt() / norm_est.max(1e-300).sqrt();
            rel.max(EPS) * norm_est
        }
    }
}

/// Knobs for [`lbd_unrestarted`].
#[derive(Debug, Clone)]
pub struct LbdConfig {
    /// How many of the smallest singular triplets must converge.
    pub num_triplets: usize,
    /// Relative tolerance: stop when `β_k·|p_k| < tol·‖A‖` for every
    /// tracked triplet, the same combined-residual criterion the main
    /// driver verifies (`Av − σu` is zero by construction here).
    pub tol: f64,
    /// Hard cap on bidiagonalization steps (two products each).
    pub max_steps: usize,
    /// Seed for the random start when none is supplied.
    pub seed: u64,
}

impl Default for LbdConfig {
    fn default() -> Self {
        LbdConfig {
            num_triplets: 1,
            tol: 1e-8,
            max_steps: 10_000,
            seed: 0x5eed,
        }
    }
}

/// Result of an unrestarted bidiagonalization run.
#[derive(Debug, Clone)]
pub struct LbdOutcome {
    /// Smallest singular-value estimates, ascending.
    pub sigmas: Vec<f64>,
    /// Left vectors matching `sigmas`.
    pub lefts: Vec<Vec<f64>>,
    /// Right vectors matching `sigmas`.
    pub rights: Vec<Vec<f64>>,
    /// Residual estimates `β_k·|p_k|` matching `sigmas`.
    pub residual_norms: Vec<f64>,
    /// Bidiagonalization steps taken.
    pub steps: usize,
    /// Products with `A` or `Aᵀ` (two per full step).
    pub matvecs: usize,
    /// Whether every tracked triplet met the stopping rule.
    pub converged: bool,
    /// Largest singular-value estimate seen (monotone).
    pub a_norm_est: f64,
    /// Residual estimate of the smallest tracked triplet after each step.
    pub trace: Vec<f64>,
}

/// Golub–Kahan bidiagonalization with full reorthogonalization of both
/// bases and no restarts, tracking the smallest singular values.
///
/// The growing bidiagonal matrix `B_k` satisfies `A V_k = U_k B_k` and
/// `Aᵀ U_k = V_k B_kᵀ + β_k v_{k+1} e_kᵀ`, so a Ritz triplet assembled
/// from a singular triplet `(σ̃, p, q)` of `B_k` has `Aṽ − σ̃ũ = 0`
/// exactly and `‖Aᵀũ − σ̃ṽ‖ = β_k·|p_k|` — the probe evaluated each step
/// through the tridiagonal `B_kᵀB_k` without forming any dense factor.
pub fn lbd_unrestarted(
    a: &SparseMatrix,
    start_right: Option<&[f64]>,
    cfg: &LbdConfig,
) -> LbdOutcome {
    let m = a.nrows();
    let n = a.ncols();
    assert!(cfg.num_triplets >= 1 && cfg.num_triplets <= m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v1 = match start_right {
        Some(s) => s.to_vec(),
        None => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    if normalize(&mut v1) == 0.0 {
        v1 = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut v1);
    }

    let mut matvecs = 0usize;
    let mut u1 = vec![0.0; m];
    a.spmv(&v1, &mut u1);
    matvecs += 1;
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let alpha1 = normalize(&mut u1);
    alphas.push(alpha1);
    let mut vs: Vec<Vec<f64>> = vec![v1];
    let mut us: Vec<Vec<f64>> = vec![u1];
    // Tridiagonal of B_kᵀB_k, maintained incrementally.
    let mut d: Vec<f64> = vec![alpha1 * alpha1];
    let mut e: Vec<f64> = Vec::new();
    let mut a_norm_est = 0.0f64;
    let mut converged = false;
    let mut alpha_closed = false;
    let mut trace = Vec::new();
    let step_cap = cfg.max_steps.min(m.min(n)).max(1);

    // Every exit leaves a consistent factorization: either the square
    // bidiagonal factor of `steps` rows (the loop yields its coupling to
    // the discarded next right direction), or — when the left space
    // closes — the same factor extended by its final coupling column,
    // which then represents the matrix on its range exactly.
    let beta_last = loop {
        let k = alphas.len();
        // Right-side expansion: v_{k+1} from Aᵀu_k.
        let mut w = vec![0.0; n];
        a.spmv_t(&us[k - 1], &mut w);
        matvecs += 1;
        axpy(-alphas[k - 1], &vs[k - 1], &mut w);
        let beta = orthogonalize_twice(&mut w, &vs);

        let top = tridiag::eigenvalue(&d, &e, d.len() - 1);
        a_norm_est = a_norm_est.max(top.max(0.0).sqrt());
        trace.push(resid_estimate(&d, &e, &alphas, &betas, beta, a_norm_est, 0));

        if d.len() >= cfg.num_triplets {
            let mut all_ok = true;
            for i in 0..cfg.num_triplets {
                let resid = resid_estimate(&d, &e, &alphas, &betas, beta, a_norm_est, i);
                if resid >= cfg.tol * a_norm_est {
                    all_ok = false;
                    break;
                }
            }
            if all_ok {
                converged = true;
                break beta;
            }
        }

        if beta <= (n as f64) * EPS * a_norm_est.max(1e-300) {
            // Right space closed before the request was met (otherwise
            // the probe above would already have passed).
            break 0.0;
        }
        if k >= step_cap {
            break beta;
        }
        scale(1.0 / beta, &mut w);
        betas.push(beta);
        vs.push(w);

        // Left-side expansion: u_{k+1} from A v_{k+1}.
        let mut z = vec![0.0; m];
        a.spmv(&vs[k], &mut z);
        matvecs += 1;
        axpy(-beta, &us[k - 1], &mut z);
        let alpha = orthogonalize_twice(&mut z, &us);
        if alpha <= (m as f64) * EPS * a_norm_est.max(1e-300) {
            // Left space closed: the factor with its fresh coupling
            // column represents the matrix exactly on its range, so the
            // triplets extracted below carry no residual.
            alpha_closed = true;
            converged = d.len() >= cfg.num_triplets;
            break 0.0;
        }
        scale(1.0 / alpha, &mut z);
        alphas.push(alpha);
        us.push(z);
        d.push(alpha * alpha + beta * beta);
        e.push(alphas[k - 1] * beta);
    };

    // Final extraction through a dense SVD of the small factor.
    let k = alphas.len();
    let (pmat, svals, qmat, coupling) = if alpha_closed {
        // The factor is k×(k+1); decompose its (tall) transpose and swap
        // the two sides back.
        let lt = DenseMatrix::from_fn(k + 1, k, |i, j| {
            if i == j {
                alphas[j]
            } else if i == j + 1 {
                betas[j]
            } else {
                0.0
            }
        });
        let (w, s, z) = svd(&lt);
        (z, s, w, 0.0)
    } else {
        let bk = DenseMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alphas[i]
            } else if j == i + 1 {
                betas[i]
            } else {
                0.0
            }
        });
        let (p, s, q) = svd(&bk);
        (p, s, q, beta_last)
    };
    let track = cfg.num_triplets.min(k);
    let mut sigmas = Vec::with_capacity(track);
    let mut lefts = Vec::with_capacity(track);
    let mut rights = Vec::with_capacity(track);
    let mut residual_norms = Vec::with_capacity(track);
    for i in 0..track {
        let p = pmat.col(i);
        let q = qmat.col(i);
        let mut u = vec![0.0; m];
        for (c, ub) in p.iter().zip(&us) {
            axpy(*c, ub, &mut u);
        }
        normalize(&mut u);
        let mut v = vec![0.0; n];
        for (c, vb) in q.iter().zip(&vs) {
            axpy(*c, vb, &mut v);
        }
        normalize(&mut v);
        sigmas.push(svals[i]);
        lefts.push(u);
        rights.push(v);
        residual_norms.push(coupling * p[k - 1].abs());
    }

    LbdOutcome {
        sigmas,
        lefts,
        rights,
        residual_norms,
        steps: k,
        matvecs,
        converged,
        a_norm_est,
        trace,
    }
}

/// Residual estimate for the `i`-th smallest tracked triplet of the
/// current bidiagonal factor: `β·|pₖ/σ̃|`, where `p = B q` comes from the
/// tridiagonal eigenvector `q` without forming any dense matrix. At noise
/// level the left direction is not yet determined, so the full coupling
/// strength is charged instead.
fn resid_estimate(
    d: &[f64],
    e: &[f64],
    alphas: &[f64],
    betas: &[f64],
    beta: f64,
    a_norm_est: f64,
    i: usize,
) -> f64 {
    let theta = tridiag::eigenvalue(d, e, i);
    let sigma = theta.max(0.0).sqrt();
    if sigma > EPS * a_norm_est {
        let q = tridiag::eigenvector(d, e, theta);
        let p = bidiag_times(alphas, betas, &q);
        beta * (p[p.len() - 1] / sigma).abs()
    } else {
        beta
    }
}

/// `p = B q` for the upper-bidiagonal factor held as diagonal `alphas` and
/// superdiagonal `betas`.
fn bidiag_times(alphas: &[f64], betas: &[f64], q: &[f64]) -> Vec<f64> {
    let k = alphas.len();
    let mut p = vec![0.0; k];
    for i in 0..k {
        p[i] = alphas[i] * q[i];
        if i + 1 < k && i < betas.len() {
            p[i] += betas[i] * q[i + 1];
        }
    }
    p
}
