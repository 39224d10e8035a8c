//! Davidson-type symmetric eigensolver with thick `+k` restarts.
//!
//! One engine covers every configuration the singular-value drivers need:
//!
//! - **GD(+k)**: the search space grows by the obliquely-projected
//!   (optionally preconditioned) residual of the targeted Ritz pair. At a
//!   restart the basis shrinks to the Ritz vectors nearest the target plus
//!   the targeted Ritz vectors of the previous iteration, re-expressed in
//!   the current basis at no extra matrix-vector cost.
//! - **JDQMR**: the expansion vector instead comes from an inner
//!   quasi-minimal-residual solve of the projected correction equation
//!   `(I − xxᵀ)(op − θI)(I − xxᵀ) t = −r`, stopped by a relative drop that
//!   tightens as the outer iteration progresses, a plateau rule (the inner
//!   residual stalling is a first-order sign that the outer eigenresidual
//!   has taken over), or an iteration cap.
//! - **Refined extraction**: for interior or badly-scaled targets, the
//!   coefficient vector minimizing `‖(op − τI)x‖` over the basis replaces
//!   the Ritz vector of the targeted pair. The minimizer is the smallest
//!   right singular vector of `R` from a maintained QR factorization of
//!   `W − τV`, updated one column per iteration and refactored on restarts,
//!   locks, and shift changes. The targeted value is the Rayleigh quotient
//!   of the refined vector.
//!
//! Convergence is always tested on the true residual `w − θx` with
//! `w = op·x` taken from the exact relation `W = op·V`; converged pairs are
//! locked out of the search space and every later expansion is
//! orthogonalized against them.

use crate::dense::{qr_append_column, qr_factor, svd, sym_eig, DenseMatrix};
use crate::history::{ConvergenceHistory, HistoryEntry, Side};
use crate::operators::{LinearOperator, Preconditioner};
use crate::vecops::{axpy, dot, norm2, normalize, orthogonalize_twice, scale};
use crate::EPS;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Relative magnitude below which a refined-extraction shift is treated as
/// indistinguishable from zero and the Ritz vector is used instead. Set a
/// little above `sqrt(EPS)`, the level where a shift derived from squared
/// quantities loses all significant digits.
const REFINED_SHIFT_FLOOR: f64 = 1e-7;

/// Which end of the spectrum (or which interior points) to converge to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    SmallestAlgebraic,
    LargestAlgebraic,
    /// Target eigenvalues nearest `shifts[i]` for the `i`-th pair (the last
    /// shift repeats when there are more pairs than shifts).
    ClosestToShifts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extraction {
    RayleighRitz,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolve {
    /// Expand with the obliquely-projected preconditioned residual.
    None,
    /// Expand with an inner quasi-minimal-residual correction solve of at
    /// most `max_inner` steps (`0` behaves like `None`).
    Jd { max_inner: usize },
}

/// How the per-pair convergence threshold is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TolRule {
    /// `‖r‖ < tol · norm_est`.
    FixedRelative,
    /// Normal-equations rule: `‖r‖ < max(tol·√θ/√norm_est, ε) · norm_est`,
    /// so each squared singular value gets the tolerance that matches a
    /// uniform backward error on the original matrix. When the first
    /// argument of the max drops below machine precision the threshold is
    /// floored and the pair is flagged as floor-limited.
    NormalEqDynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitFill {
    /// Start from the orthonormalized guesses only.
    None,
    /// Pad the initial basis to the restart size with a Krylov sequence
    /// seeded by the guesses; each pad vector reuses the operator product
    /// already computed for the projection matrix.
    LanczosToMinRestart,
}

#[derive(Debug, Clone)]
pub struct EigConfig {
    pub num_pairs: usize,
    pub which: Which,
    pub shifts: Vec<f64>,
    pub extraction: Extraction,
    pub inner: InnerSolve,
    pub tol: f64,
    pub tol_rule: TolRule,
    /// Initial estimate of the operator norm; grows monotonically with the
    /// largest Ritz magnitude seen. `0.0` discovers it from scratch.
    pub norm_est_init: f64,
    pub max_basis: usize,
    pub min_restart: usize,
    /// How many previous-iteration target vectors a restart retains.
    pub k_prev: usize,
    /// Residuals expanded per iteration.
    pub block_size: usize,
    /// Budget in operator applications times [`LinearOperator::matvec_cost`].
    pub max_matvecs: usize,
    pub max_outer: Option<usize>,
    pub init_fill: InitFill,
    /// Re-insert a fresh copy of the next pair's initial guess after a lock.
    pub reintroduce_guesses: bool,
    /// After this many outer iterations without a 1% residual improvement,
    /// a target sitting at `10ε·norm_est` locks as floor-limited. `0`
    /// disables the escape.
    pub stagnation_window: usize,
    /// For operators whose spectrum is symmetric under negating the second
    /// block of the vector (split at this coordinate), locking `(θ, [v; u])`
    /// also deflates the twin eigenvector `(−θ, [v; −u])` so it can never be
    /// found as a spurious duplicate.
    pub mirror_split: Option<usize>,
    /// Treat the shifts as an ascending ladder of non-negative targets:
    /// selection prefers the smallest Ritz value at or above the largest
    /// locked value, the target shift never falls below that value, and
    /// refined extraction follows the selected Ritz value. Useful when
    /// shifts are rough ascending estimates — proximity to a poor estimate
    /// can skip over a cluster member, while the ladder cannot.
    pub monotone_shifts: bool,
    /// Label for history entries.
    pub stage: Side,
    pub seed: u64,
}

impl Default for EigConfig {
    fn default() -> Self {
        EigConfig {
            num_pairs: 1,
            which: Which::SmallestAlgebraic,
            shifts: Vec::new(),
            extraction: Extraction::RayleighRitz,
            inner: InnerSolve::None,
            tol: 1e-10,
            tol_rule: TolRule::FixedRelative,
            norm_est_init: 0.0,
            max_basis: 35,
            min_restart: 21,
            k_prev: 1,
            block_size: 1,
            max_matvecs: 1_000_000,
            max_outer: None,
            init_fill: InitFill::None,
            reintroduce_guesses: false,
            stagnation_window: 0,
            mirror_split: None,
            monotone_shifts: false,
            stage: Side::NormalEq,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergedPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual_norm: f64,
    /// The pair stopped at the attainable floor (machine-precision clip of
    /// the dynamic tolerance, stagnation there, or a search space spanning
    /// the whole domain) instead of the nominal tolerance.
    pub floor_limited: bool,
}

#[derive(Debug, Clone)]
pub struct EigOutcome {
    pub pairs: Vec<ConvergedPair>,
    /// Best current approximations for targets still unconverged when the
    /// run stopped early; empty after full convergence.
    pub leading: Vec<(f64, Vec<f64>)>,
    pub history: ConvergenceHistory,
    pub norm_est: f64,
    pub matvecs: usize,
    pub outer_iters: usize,
}

#[derive(Debug, Error)]
pub enum EigError {
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(
        "budget exhausted after {matvecs} operator products with {converged}/{requested} pairs converged"
    )]
    BudgetExhausted {
        matvecs: usize,
        converged: usize,
        requested: usize,
        partial: Box<EigOutcome>,
    },
}

/// Per-iteration view handed to the observer hook.
#[derive(Debug)]
pub struct IterationSnapshot<'s> {
    pub outer_iter: usize,
    pub target_index: usize,
    pub theta: f64,
    pub vector: &'s [f64],
    pub residual: &'s [f64],
    pub residual_norm: f64,
    pub matvecs: usize,
    pub basis_size: usize,
}

/// Optional callbacks into the outer loop.
///
/// `user_converged` is consulted when the internal test passes on a
/// non-floored target: returning `false` keeps the target iterating, which
/// lets a caller enforce a criterion computed with fresh operator products.
/// `observer` sees every outer iteration.
#[derive(Default)]
pub struct SolveHooks<'h> {
    pub user_converged: Option<Box<dyn FnMut(usize, f64, &[f64]) -> bool + 'h>>,
    pub observer: Option<Box<dyn FnMut(&IterationSnapshot) + 'h>>,
}

pub fn gd_plus_k_solve(
    op: &dyn LinearOperator,
    precond: Option<&Preconditioner<'_>>,
    guesses: &[Vec<f64>],
    config: &EigConfig,
) -> Result<EigOutcome, EigError> {
    gd_plus_k_solve_hooked(op, precond, guesses, config, SolveHooks::default())
}

pub fn gd_plus_k_solve_hooked(
    op: &dyn LinearOperator,
    precond: Option<&Preconditioner<'_>>,
    guesses: &[Vec<f64>],
    config: &EigConfig,
    mut hooks: SolveHooks<'_>,
) -> Result<EigOutcome, EigError> {
    validate(config, op.dim_in())?;
    let mut gd = Gd::new(op, precond, config.clone());
    gd.run(guesses, &mut hooks)
}

fn validate(cfg: &EigConfig, dim: usize) -> Result<(), EigError> {
    let bad = |m: &str| Err(EigError::BadConfig(m.to_string()));
    if dim == 0 {
        return bad("operator has dimension zero");
    }
    if cfg.num_pairs == 0 {
        return bad("at least one pair must be requested");
    }
    if cfg.num_pairs > dim {
        return bad("more pairs requested than the operator dimension");
    }
    if cfg.block_size == 0 {
        return bad("block size must be at least one");
    }
    if cfg.max_basis < 2 {
        return bad("the basis must be allowed at least two vectors");
    }
    if !(cfg.tol >= 0.0) {
        return bad("tolerance must be non-negative");
    }
    if matches!(cfg.which, Which::ClosestToShifts) && cfg.shifts.is_empty() {
        return bad("shift targeting needs at least one shift");
    }
    Ok(())
}

struct Extracted {
    thetas: Vec<f64>,
    y: DenseMatrix,
    /// Ritz indices ordered by the targeting rule (nearest target first).
    order: Vec<usize>,
    target_theta: f64,
    target_coeff: Vec<f64>,
}

struct Gd<'a> {
    op: &'a dyn LinearOperator,
    precond: Option<&'a Preconditioner<'a>>,
    cfg: EigConfig,
    dim: usize,
    max_basis_eff: usize,
    min_restart_eff: usize,
    max_applies: usize,
    v: DenseMatrix,
    w: DenseMatrix,
    h: DenseMatrix,
    qr_q: DenseMatrix,
    qr_r: DenseMatrix,
    qr_fresh: bool,
    qr_shift: f64,
    /// Shift driving refined extraction when no explicit shifts are given.
    float_shift: f64,
    locked: Vec<ConvergedPair>,
    /// Deflated directions that are not reported: mirror twins of locked
    /// vectors on block-antisymmetric operators.
    extra_deflation: Vec<Vec<f64>>,
    guess_pool: Vec<Vec<f64>>,
    prev_coeffs: Vec<Vec<f64>>,
    history: ConvergenceHistory,
    norm_est: f64,
    applies: usize,
    outer: usize,
    outer_on_target: usize,
    best_resid: f64,
    since_improve: usize,
    rng: ChaCha8Rng,
}

impl<'a> Gd<'a> {
    fn new(op: &'a dyn LinearOperator, precond: Option<&'a Preconditioner<'a>>, cfg: EigConfig) -> Self {
        let dim = op.dim_in();
        let max_basis_eff = cfg.max_basis.min(dim);
        let min_restart_eff = cfg
            .min_restart
            .min(max_basis_eff.saturating_sub(cfg.k_prev + cfg.block_size))
            .max(1);
        let cost = op.matvec_cost().max(1);
        let max_applies = cfg.max_matvecs / cost;
        let seed = cfg.seed;
        let norm_est = cfg.norm_est_init.max(0.0);
        Gd {
            op,
            precond,
            dim,
            max_basis_eff,
            min_restart_eff,
            max_applies,
            v: DenseMatrix::zeros(dim, 0),
            w: DenseMatrix::zeros(dim, 0),
            h: DenseMatrix::zeros(cfg.max_basis, cfg.max_basis),
            qr_q: DenseMatrix::zeros(dim, 0),
            qr_r: DenseMatrix::zeros(0, 0),
            qr_fresh: false,
            qr_shift: 0.0,
            float_shift: 0.0,
            locked: Vec::new(),
            extra_deflation: Vec::new(),
            guess_pool: Vec::new(),
            prev_coeffs: Vec::new(),
            history: ConvergenceHistory::new(seed),
            norm_est,
            applies: 0,
            outer: 0,
            outer_on_target: 0,
            best_resid: f64::INFINITY,
            since_improve: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        }
    }

    fn matvecs(&self) -> usize {
        self.applies * self.op.matvec_cost()
    }

    fn apply_op(&mut self, x: &[f64]) -> Vec<f64> {
        self.applies += 1;
        self.op.apply_vec(x)
    }

    fn random_unit(&mut self) -> Vec<f64> {
        let mut t: Vec<f64> = (0..self.dim).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut t);
        t
    }

    fn leading_h(&self, bs: usize) -> DenseMatrix {
        DenseMatrix::from_fn(bs, bs, |i, j| self.h.get(i, j))
    }

    /// Appends an already-orthonormal vector, paying one operator product
    /// for its `W` column and extending the projection matrix and (when
    /// fresh) the refined QR factorization.
    fn append_basis_vector(&mut self, t: Vec<f64>) {
        let j = self.v.ncols();
        let w = self.apply_op(&t);
        self.v.push_col(&t);
        self.w.push_col(&w);
        for i in 0..=j {
            let hij = dot(self.v.col(i), &w);
            self.h.set(i, j, hij);
            self.h.set(j, i, hij);
        }
        if matches!(self.cfg.extraction, Extraction::Refined) && self.qr_fresh {
            let mut col = w;
            axpy(-self.qr_shift, &t, &mut col);
            if qr_append_column(&mut self.qr_q, &mut self.qr_r, &col).is_err() {
                self.qr_fresh = false;
            }
        }
    }

    /// Orthogonalizes against the basis and the locked vectors, then appends.
    /// Returns false for directions that vanish in the current space.
    fn try_append(&mut self, t: &mut Vec<f64>) -> bool {
        if self.v.ncols() >= self.max_basis_eff.max(self.min_restart_eff + self.cfg.k_prev) {
            return false;
        }
        let orig = norm2(t);
        if !orig.is_finite() || orig == 0.0 {
            return false;
        }
        let rem = {
            let mut cols: Vec<&[f64]> = (0..self.v.ncols()).map(|i| self.v.col(i)).collect();
            cols.extend(self.locked.iter().map(|p| p.vector.as_slice()));
            cols.extend(self.extra_deflation.iter().map(|d| d.as_slice()));
            orthogonalize_twice(t, &cols)
        };
        if rem <= self.dim as f64 * EPS * orig {
            return false;
        }
        normalize(t);
        self.append_basis_vector(t.clone());
        true
    }

    fn push_event(&mut self, residual_norm: f64, note: &str) {
        self.history.push(HistoryEntry {
            matvecs: self.matvecs(),
            side: self.cfg.stage,
            target_index: self.locked.len(),
            residual_norm,
            locked: false,
            note: Some(note.to_string()),
        });
    }

    fn build_initial_basis(&mut self, guesses: &[Vec<f64>]) {
        self.guess_pool = guesses.to_vec();
        for g in guesses.iter().take(self.max_basis_eff) {
            assert_eq!(g.len(), self.dim, "initial guess has the wrong dimension");
            let mut t = g.clone();
            if !self.try_append(&mut t) {
                let mut rnd = self.random_unit();
                if self.try_append(&mut rnd) {
                    self.push_event(0.0, "replaced a degenerate initial guess with a random direction");
                }
            }
        }
        if self.v.ncols() == 0 {
            let mut t = self.random_unit();
            self.try_append(&mut t);
        }
        if matches!(self.cfg.init_fill, InitFill::LanczosToMinRestart) {
            while self.v.ncols() < self.min_restart_eff.min(self.dim)
                && self.applies < self.max_applies
            {
                let mut t = self.w.col(self.v.ncols() - 1).to_vec();
                if !self.try_append(&mut t) {
                    let mut rnd = self.random_unit();
                    if !self.try_append(&mut rnd) {
                        break;
                    }
                }
            }
        }
    }

    fn target_shift(&self) -> f64 {
        match self.cfg.which {
            Which::ClosestToShifts => {
                let k = self.locked.len().min(self.cfg.shifts.len() - 1);
                let mut s = self.cfg.shifts[k];
                if self.cfg.monotone_shifts {
                    for p in &self.locked {
                        s = s.max(p.value);
                    }
                }
                s
            }
            _ => self.float_shift,
        }
    }

    fn order_indices(&self, thetas: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..thetas.len()).collect();
        match self.cfg.which {
            Which::SmallestAlgebraic => {
                idx.sort_by(|&a, &b| thetas[a].partial_cmp(&thetas[b]).unwrap())
            }
            Which::LargestAlgebraic => {
                idx.sort_by(|&a, &b| thetas[b].partial_cmp(&thetas[a]).unwrap())
            }
            Which::ClosestToShifts => {
                if self.cfg.monotone_shifts {
                    // Ladder selection: prefer the smallest value at or
                    // above the largest locked one (with a roundoff slack),
                    // falling back to proximity for anything below the rung.
                    // A shift estimated from a partially converged cluster
                    // can sit past its true value; picking by distance to it
                    // would skip cluster members, while the ladder cannot.
                    let slack = 10.0 * EPS * self.norm_est;
                    let mut rung = 0.0f64;
                    for p in &self.locked {
                        rung = rung.max(p.value);
                    }
                    rung -= slack;
                    let key = |t: f64| -> (u8, f64) {
                        if t >= rung {
                            (0, t - rung)
                        } else {
                            (1, rung - t)
                        }
                    };
                    idx.sort_by(|&a, &b| {
                        key(thetas[a]).partial_cmp(&key(thetas[b])).unwrap()
                    })
                } else {
                    let s = self.target_shift();
                    idx.sort_by(|&a, &b| {
                        (thetas[a] - s).abs().partial_cmp(&(thetas[b] - s).abs()).unwrap()
                    })
                }
            }
        }
        idx
    }

    fn refactor_refined_qr(&mut self, shift: f64) {
        let bs = self.v.ncols();
        let mut m = DenseMatrix::zeros(self.dim, bs);
        for j in 0..bs {
            let col = m.col_mut(j);
            col.copy_from_slice(self.w.col(j));
        }
        for j in 0..bs {
            let vcol = self.v.col(j).to_vec();
            axpy(-shift, &vcol, m.col_mut(j));
        }
        let (q, r) = qr_factor(&m);
        self.qr_q = q;
        self.qr_r = r;
        self.qr_shift = shift;
        self.qr_fresh = true;
    }

    fn extract(&mut self) -> Extracted {
        let bs = self.v.ncols();
        let hb = self.leading_h(bs);
        let (thetas, y) = sym_eig(&hb);
        for &t in &thetas {
            if t.abs() > self.norm_est {
                self.norm_est = t.abs();
            }
        }
        let order = self.order_indices(&thetas);
        let (target_theta, target_coeff) = match self.cfg.extraction {
            Extraction::RayleighRitz => (thetas[order[0]], y.col(order[0]).to_vec()),
            Extraction::Refined => {
                // Under ladder selection the static shift may lag or
                // overshoot the actual next rung, so the refined residual
                // is minimized at the selected Ritz value instead; that
                // tracks the true target as the basis sharpens.
                let shift = if matches!(self.cfg.which, Which::ClosestToShifts)
                    && self.cfg.monotone_shifts
                {
                    thetas[order[0]]
                } else {
                    self.target_shift()
                };
                if shift.abs() <= REFINED_SHIFT_FLOOR * self.norm_est {
                    // A refined vector minimizes ‖(H − τ)s‖ and cannot tell
                    // a ±θ twin pair apart when τ sits below the accuracy
                    // of the shift estimates: both signs leave nearly the
                    // same minimum. The projected eigenproblem separates
                    // the pair exactly, so use the Ritz vector until the
                    // target climbs out of that noise band.
                    (thetas[order[0]], y.col(order[0]).to_vec())
                } else {
                    if !self.qr_fresh || self.qr_shift != shift {
                        self.refactor_refined_qr(shift);
                    }
                    let (_, _, right) = svd(&self.qr_r);
                    let s1 = right.col(0).to_vec();
                    let hs = hb.matvec(&s1);
                    (dot(&s1, &hs), s1)
                }
            }
        };
        if matches!(self.cfg.extraction, Extraction::Refined)
            && !matches!(self.cfg.which, Which::ClosestToShifts)
        {
            // Without explicit shifts the refined target follows the Ritz
            // value, so the factorization goes stale every iteration.
            self.float_shift = target_theta;
            self.qr_fresh = false;
        }
        Extracted { thetas, y, order, target_theta, target_coeff }
    }

    /// Absolute threshold for the targeted pair and whether the dynamic
    /// rule was clipped at machine precision.
    fn tolerance_for(&self, theta: f64) -> (f64, bool) {
        match self.cfg.tol_rule {
            TolRule::FixedRelative => (self.cfg.tol * self.norm_est, false),
            TolRule::NormalEqDynamic => {
                let ratio = theta.max(0.0).sqrt() / self.norm_est.sqrt();
                let rel = self.cfg.tol * ratio;
                if rel < EPS {
                    (EPS * self.norm_est, true)
                } else {
                    (rel * self.norm_est, false)
                }
            }
        }
    }

    fn rotate_basis(&mut self, yr: &DenseMatrix) {
        let bs = self.v.ncols();
        let hb = self.leading_h(bs);
        self.v = self.v.matmul(yr);
        self.w = self.w.matmul(yr);
        let hn = yr.transpose().matmul(&hb.matmul(yr));
        self.h = DenseMatrix::zeros(self.cfg.max_basis, self.cfg.max_basis);
        for j in 0..hn.ncols() {
            for i in 0..hn.nrows() {
                self.h.set(i, j, hn.get(i, j));
            }
        }
        let old_prev = std::mem::take(&mut self.prev_coeffs);
        for c in old_prev {
            let cp = padded(&c, bs);
            self.prev_coeffs.push(yr.tr_matvec(&cp));
        }
        self.qr_fresh = false;
    }

    fn restart(&mut self, ext: &Extracted) {
        let bs = self.v.ncols();
        let keep_n = self.min_restart_eff.min(bs);
        if keep_n >= bs {
            return;
        }
        let mut cols: Vec<Vec<f64>> =
            ext.order[..keep_n].iter().map(|&i| ext.y.col(i).to_vec()).collect();
        // Previous-iteration target directions, orthogonalized in
        // coefficient space; re-expressing them costs no operator products.
        for c in &self.prev_coeffs.clone() {
            let mut cp = padded(c, bs);
            let rem = orthogonalize_twice(&mut cp, &cols);
            if rem > bs as f64 * EPS {
                normalize(&mut cp);
                cols.push(cp);
            }
        }
        let yr = DenseMatrix::from_columns(&cols);
        self.rotate_basis(&yr);
    }

    /// Locks the targeted pair; returns true when all requested pairs are in.
    fn lock_current(
        &mut self,
        ext: &Extracted,
        x: Vec<f64>,
        resid: f64,
        floor: bool,
        note: Option<String>,
    ) -> bool {
        let mirror = self.cfg.mirror_split.and_then(|split| {
            if split == 0 || split >= x.len() {
                return None;
            }
            let mut m = x.clone();
            for e in &mut m[split..] {
                *e = -*e;
            }
            let nn = norm2(&m);
            (nn > 0.0).then(|| {
                scale(1.0 / nn, &mut m);
                m
            })
        });
        self.history.push(HistoryEntry {
            matvecs: self.matvecs(),
            side: self.cfg.stage,
            target_index: self.locked.len(),
            residual_norm: resid,
            locked: true,
            note,
        });
        self.locked.push(ConvergedPair {
            value: ext.target_theta,
            vector: x,
            residual_norm: resid,
            floor_limited: floor,
        });
        self.outer_on_target = 0;
        self.best_resid = f64::INFINITY;
        self.since_improve = 0;
        self.prev_coeffs.clear();
        if self.locked.len() >= self.cfg.num_pairs {
            return true;
        }
        let bs = self.v.ncols();
        if bs > 1 {
            let cols: Vec<Vec<f64>> =
                (0..bs).filter(|&i| i != ext.order[0]).map(|i| ext.y.col(i).to_vec()).collect();
            let yr = DenseMatrix::from_columns(&cols);
            self.rotate_basis(&yr);
        } else {
            self.v = DenseMatrix::zeros(self.dim, 0);
            self.w = DenseMatrix::zeros(self.dim, 0);
            self.h = DenseMatrix::zeros(self.cfg.max_basis, self.cfg.max_basis);
            self.qr_fresh = false;
        }
        if let Some(m) = mirror {
            // The twin is an eigenvector for −θ up to the lock residual, so
            // its component can be removed from W without new products.
            self.purge_direction(&m, -ext.target_theta);
            self.extra_deflation.push(m);
        }
        if self.cfg.reintroduce_guesses {
            if let Some(g) = self.guess_pool.get(self.locked.len()).cloned() {
                let mut t = g;
                if self.try_append(&mut t) {
                    self.push_event(resid, "reintroduced the next pair's initial guess");
                } else {
                    self.push_event(resid, "skipped reintroducing a dependent guess");
                }
            }
        }
        if self.v.ncols() == 0 {
            let mut t = self.random_unit();
            self.try_append(&mut t);
        }
        false
    }

    /// Removes a known eigendirection (eigenvalue `dir_value`) from the
    /// basis. `W` follows by linearity since `op·dir ≈ dir_value·dir`, so no
    /// operator products are spent; columns left with nothing are dropped.
    fn purge_direction(&mut self, dir: &[f64], dir_value: f64) {
        let bs = self.v.ncols();
        if bs == 0 {
            return;
        }
        let mut keep_v: Vec<Vec<f64>> = Vec::new();
        let mut keep_w: Vec<Vec<f64>> = Vec::new();
        for j in 0..bs {
            let mut vj = self.v.col(j).to_vec();
            let mut wj = self.w.col(j).to_vec();
            for _ in 0..2 {
                let c = dot(dir, &vj);
                axpy(-c, dir, &mut vj);
                axpy(-c * dir_value, dir, &mut wj);
            }
            for (pv, pw) in keep_v.iter().zip(&keep_w) {
                for _ in 0..2 {
                    let c = dot(pv, &vj);
                    axpy(-c, pv, &mut vj);
                    axpy(-c, pw, &mut wj);
                }
            }
            let nn = norm2(&vj);
            if nn > self.dim as f64 * EPS {
                scale(1.0 / nn, &mut vj);
                scale(1.0 / nn, &mut wj);
                keep_v.push(vj);
                keep_w.push(wj);
            }
        }
        if keep_v.is_empty() {
            self.v = DenseMatrix::zeros(self.dim, 0);
            self.w = DenseMatrix::zeros(self.dim, 0);
        } else {
            self.v = DenseMatrix::from_columns(&keep_v);
            self.w = DenseMatrix::from_columns(&keep_w);
        }
        self.h = DenseMatrix::zeros(self.cfg.max_basis, self.cfg.max_basis);
        for j in 0..self.v.ncols() {
            for i in 0..=j {
                let hij = dot(self.v.col(i), self.w.col(j));
                self.h.set(i, j, hij);
                self.h.set(j, i, hij);
            }
        }
        self.prev_coeffs.clear();
        self.qr_fresh = false;
    }

    fn finish(&mut self) -> EigOutcome {
        EigOutcome {
            pairs: std::mem::take(&mut self.locked),
            leading: Vec::new(),
            history: std::mem::replace(&mut self.history, ConvergenceHistory::new(self.cfg.seed)),
            norm_est: self.norm_est,
            matvecs: self.matvecs(),
            outer_iters: self.outer,
        }
    }

    fn exhausted(&mut self) -> EigError {
        let bs = self.v.ncols();
        let mut leading = Vec::new();
        if bs > 0 {
            let hb = self.leading_h(bs);
            let (thetas, y) = sym_eig(&hb);
            let order = self.order_indices(&thetas);
            let remaining = self.cfg.num_pairs - self.locked.len();
            for &i in order.iter().take(remaining.min(bs)) {
                leading.push((thetas[i], self.v.matvec(y.col(i))));
            }
        }
        let converged = self.locked.len();
        let outcome = EigOutcome {
            pairs: std::mem::take(&mut self.locked),
            leading,
            history: std::mem::replace(&mut self.history, ConvergenceHistory::new(self.cfg.seed)),
            norm_est: self.norm_est,
            matvecs: self.matvecs(),
            outer_iters: self.outer,
        };
        EigError::BudgetExhausted {
            matvecs: outcome.matvecs,
            converged,
            requested: self.cfg.num_pairs,
            partial: Box::new(outcome),
        }
    }

    fn run(
        &mut self,
        guesses: &[Vec<f64>],
        hooks: &mut SolveHooks<'_>,
    ) -> Result<EigOutcome, EigError> {
        self.build_initial_basis(guesses);
        loop {
            if self.applies >= self.max_applies {
                return Err(self.exhausted());
            }
            if let Some(mo) = self.cfg.max_outer {
                if self.outer >= mo {
                    return Err(self.exhausted());
                }
            }

            let ext = self.extract();
            let x = self.v.matvec(&ext.target_coeff);
            let mut r = self.w.matvec(&ext.target_coeff);
            axpy(-ext.target_theta, &x, &mut r);
            let resid = norm2(&r);

            if let Some(obs) = hooks.observer.as_mut() {
                obs(&IterationSnapshot {
                    outer_iter: self.outer,
                    target_index: self.locked.len(),
                    theta: ext.target_theta,
                    vector: &x,
                    residual: &r,
                    residual_norm: resid,
                    matvecs: self.matvecs(),
                    basis_size: self.v.ncols(),
                });
            }

            if resid < 0.99 * self.best_resid {
                self.best_resid = resid;
                self.since_improve = 0;
            } else {
                self.since_improve += 1;
            }

            let mut lock_now = false;
            let mut floor = false;
            let mut note: Option<String> = None;
            if self.norm_est > 0.0 {
                let (tol_abs, clipped) = self.tolerance_for(ext.target_theta);
                if resid < tol_abs {
                    if clipped {
                        lock_now = true;
                        floor = true;
                        note = Some("tolerance floored at machine precision".to_string());
                    } else if let Some(cb) = hooks.user_converged.as_mut() {
                        if cb(self.locked.len(), ext.target_theta, &x) {
                            lock_now = true;
                        } else {
                            note =
                                Some("internal test passed; awaiting user criterion".to_string());
                        }
                    } else {
                        lock_now = true;
                    }
                }
                if !lock_now
                    && self.cfg.stagnation_window > 0
                    && self.since_improve >= self.cfg.stagnation_window
                    && resid <= 10.0 * EPS * self.norm_est
                {
                    lock_now = true;
                    floor = true;
                    note = Some("stagnated at the attainable floor".to_string());
                }
            }
            if !lock_now && self.v.ncols() == self.dim {
                // The basis spans the whole space: the extraction is exact
                // and no expansion can improve it.
                lock_now = true;
                floor = true;
                note = Some("search space spans the full domain".to_string());
            }

            self.history.push(HistoryEntry {
                matvecs: self.matvecs(),
                side: self.cfg.stage,
                target_index: self.locked.len(),
                residual_norm: resid,
                locked: false,
                note: if lock_now { None } else { note.take() },
            });

            if lock_now {
                if self.lock_current(&ext, x, resid, floor, note) {
                    return Ok(self.finish());
                }
                self.outer += 1;
                continue;
            }

            // Residuals to expand with, computed before any restart touches
            // the basis (the vectors themselves are basis-independent).
            let bs = self.v.ncols();
            let mut cands: Vec<(f64, Vec<f64>, Vec<f64>)> = vec![(ext.target_theta, x, r)];
            for b in 1..self.cfg.block_size.min(bs) {
                let idx = ext.order[b];
                let th = ext.thetas[idx];
                let xb = self.v.matvec(ext.y.col(idx));
                let mut rb = self.w.matvec(ext.y.col(idx));
                axpy(-th, &xb, &mut rb);
                cands.push((th, xb, rb));
            }

            if bs + cands.len() > self.max_basis_eff {
                self.restart(&ext);
            }

            let (max_inner, rel_drop) = match self.cfg.inner {
                InnerSolve::None => (0, 1.0),
                InnerSolve::Jd { max_inner } => (
                    max_inner,
                    0.1f64.powi(self.outer_on_target.min(300) as i32).max(1e-14),
                ),
            };
            let mut appended = 0;
            for (th, xb, rb) in &cands {
                if self.applies >= self.max_applies || self.v.ncols() >= self.dim {
                    break;
                }
                let mut t = jd_correction(
                    self.op,
                    self.precond,
                    *th,
                    xb,
                    rb,
                    max_inner,
                    rel_drop,
                    &mut self.applies,
                    self.max_applies,
                );
                if self.try_append(&mut t) {
                    appended += 1;
                }
            }
            let mut injected = false;
            if appended == 0 && self.v.ncols() < self.dim && self.applies < self.max_applies {
                let mut t = self.random_unit();
                if self.try_append(&mut t) {
                    injected = true;
                    self.push_event(resid, "injected a random direction after a degenerate correction");
                }
            }
            if appended == 0 && !injected && self.applies < self.max_applies {
                // Nothing — not even a random vector — can enter the basis:
                // locked and deflated directions plus the current basis span
                // every reachable direction, so the extraction cannot
                // improve. Locking here is what terminates; the operator
                // application counter is frozen and would never trip the
                // budget check.
                let (_, x0, _) = cands.swap_remove(0);
                if self.lock_current(
                    &ext,
                    x0,
                    resid,
                    true,
                    Some("reachable search space exhausted".to_string()),
                ) {
                    return Ok(self.finish());
                }
                self.outer += 1;
                continue;
            }

            self.prev_coeffs.insert(0, ext.target_coeff);
            self.prev_coeffs.truncate(self.cfg.k_prev);
            self.outer += 1;
            self.outer_on_target += 1;
        }
    }
}

fn padded(c: &[f64], len: usize) -> Vec<f64> {
    let mut out = c.to_vec();
    out.resize(len, 0.0);
    out
}

/// Correction step shared by GD and JDQMR.
///
/// With `max_inner == 0` this returns the obliquely-projected preconditioned
/// residual `K⁻¹r − (uᵀK⁻¹r)/(uᵀK⁻¹u)·K⁻¹u` (which is the plain residual
/// when no preconditioner is given, since `r ⊥ u`). Otherwise it runs a
/// quasi-minimal-residual iteration on the projected correction equation,
/// with the same oblique projection built into the preconditioner so every
/// iterate stays orthogonal to `u`. Breakdowns fall back to the best
/// smoothed iterate so far, never to garbage.
#[allow(clippy::too_many_arguments)]
fn jd_correction(
    op: &dyn LinearOperator,
    precond: Option<&Preconditioner<'_>>,
    theta: f64,
    u: &[f64],
    r: &[f64],
    max_inner: usize,
    rel_drop: f64,
    applies: &mut usize,
    max_applies: usize,
) -> Vec<f64> {
    let n = u.len();
    // K⁻¹u is fixed for the whole inner solve; computing it here keeps the
    // oblique projection at one extra preconditioner apply per call.
    let ku = precond.map(|k| {
        let t = k.apply_vec(u);
        let denom = dot(u, &t);
        (t, denom)
    });
    let ktilde = |s: &[f64]| -> Vec<f64> {
        match (&precond, &ku) {
            (Some(k), Some((ku_v, denom))) if *denom != 0.0 => {
                let mut z = k.apply_vec(s);
                let c = dot(u, &z) / denom;
                axpy(-c, ku_v, &mut z);
                z
            }
            _ => {
                let mut z = s.to_vec();
                let c = dot(u, &z);
                axpy(-c, u, &mut z);
                z
            }
        }
    };

    let mut b: Vec<f64> = r.iter().map(|v| -v).collect();
    let cb = dot(u, &b);
    axpy(-cb, u, &mut b);

    let mut z = ktilde(&b);
    if max_inner == 0 {
        return if norm2(&z) > 0.0 { z } else { b };
    }
    let mut rho = dot(&b, &z);
    if !rho.is_finite() || rho <= 0.0 {
        return if norm2(&z) > 0.0 { z } else { b };
    }
    let mut res = b.clone();
    let mut x = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut p = z.clone();
    let tau0 = rho.sqrt();
    let mut tau = tau0;
    let mut theta_old: f64 = 0.0;
    let mut plateau = 0;
    let mut took_step = false;
    for _ in 0..max_inner {
        if *applies >= max_applies {
            break;
        }
        *applies += 1;
        let mut q = op.apply_vec(&p);
        axpy(-theta, &p, &mut q);
        let cq = dot(u, &q);
        axpy(-cq, u, &mut q);
        let sigma = dot(&p, &q);
        if !sigma.is_finite() || sigma == 0.0 {
            break;
        }
        let alpha = rho / sigma;
        axpy(-alpha, &q, &mut res);
        z = ktilde(&res);
        let rho_new = dot(&res, &z);
        if !rho_new.is_finite() || rho_new < 0.0 {
            break;
        }
        // Quasi-residual smoothing keeps the returned iterate monotone even
        // though the underlying recurrence is a plain conjugate-gradient
        // step on an indefinite system.
        let theta_k = rho_new.sqrt() / tau;
        let c2 = 1.0 / (1.0 + theta_k * theta_k);
        let tau_prev = tau;
        tau *= theta_k * c2.sqrt();
        let carry = c2 * theta_old * theta_old;
        for i in 0..n {
            d[i] = carry * d[i] + c2 * alpha * p[i];
            x[i] += d[i];
        }
        took_step = true;
        theta_old = theta_k;
        if tau / tau0 <= rel_drop || rho_new == 0.0 {
            break;
        }
        if tau / tau_prev > 0.99 {
            plateau += 1;
            if plateau >= 3 {
                break;
            }
        } else {
            plateau = 0;
        }
        let beta = rho_new / rho;
        rho = rho_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if took_step {
        x
    } else if norm2(&z) > 0.0 {
        z
    } else {
        b
    }
}
