//! Two-stage hybrid singular-value solver.
//!
//! Stage one runs the eigensolver on the normal-equations operator `AᵀA`
//! (cheap iterations, but attainable accuracy limited to roughly
//! `ε‖A‖²/σ` for a singular value `σ`). Every converged right vector is
//! then verified against the user criterion
//!
//! ```text
//! sqrt(‖Aᵀu − σv‖² + ‖Av − σu‖²)  <  tol · ‖A‖
//! ```
//!
//! Triplets that already satisfy it are kept. The rest are handed to stage
//! two, which reruns the eigensolver on the augmented operator
//! `[0 Aᵀ; A 0]` with refined extraction near the stage-one estimates,
//! iterating left and right vectors jointly so tiny singular values are not
//! polluted by the `1/σ` amplification inherent in deriving `u` from `v`.
//!
//! The driver also provides a dynamic variant that probes both operators,
//! measures empirical convergence rates from the iteration history, and
//! commits to whichever side is making faster progress, as well as a
//! shift-and-invert front end for interior or extreme targets backed by a
//! sparse-to-dense factorization.
//!
//! Rectangular inputs are handled by orienting the problem internally so the
//! working matrix is tall; results are swapped back to the caller's
//! orientation on exit.

use std::borrow::Cow;
use std::cell::{Cell, RefCell};
use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::empirical_rate;
use crate::eigensolver::{
    gd_plus_k_solve, gd_plus_k_solve_hooked, ConvergedPair, EigConfig, EigError, EigOutcome,
    Extraction, InitFill, InnerSolve, SolveHooks, TolRule, Which,
};
use crate::history::{ConvergenceHistory, HistoryEntry, Side, SwitchDecision};
use crate::operators::{
    shift_invert_operator, AugmentedOperator, LinearOperator, NormalEqOperator, Preconditioner,
    ShiftInvertMode,
};
use crate::sparse::SparseMatrix;
use crate::vecops::{axpy, dot, norm2, normalize, orthogonalize_twice, scale};
use crate::EPS;

/// Which end of the spectrum the caller wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdWhich {
    /// The smallest singular values. This is the hard case; the second
    /// stage engages whenever the first cannot reach the tolerance.
    Smallest,
    /// The largest singular values. The normal equations alone resolve
    /// these well, so the second stage never runs.
    Largest,
}

/// Correction strategy used by the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage2Method {
    /// Olsen-style single correction step per outer iteration.
    GdPlusK,
    /// Inner Krylov solves of the projected correction equation, capped at
    /// `max_inner` steps each.
    Jdqmr {
        /// Upper bound on inner iterations per outer step.
        max_inner: usize,
    },
}

/// Knobs for the hybrid driver.
#[derive(Debug, Clone)]
pub struct SvdConfig {
    /// Number of singular triplets to compute.
    pub num_triplets: usize,
    /// Smallest or largest end of the spectrum.
    pub which: SvdWhich,
    /// Relative tolerance `tol` in the user criterion
    /// `sqrt(‖Aᵀu − σv‖² + ‖Av − σu‖²) < tol·‖A‖`.
    pub tol: f64,
    /// Block size for the first stage (the second stage always runs with
    /// a block of one, since its targets arrive pre-separated).
    pub block_size: usize,
    /// Maximum basis dimension before a thick restart.
    pub max_basis: usize,
    /// Basis dimension kept at a restart.
    pub min_restart: usize,
    /// Global budget of operator applications across both stages.
    pub max_matvecs: usize,
    /// Correction strategy for the second stage.
    pub stage2: Stage2Method,
    /// Seed for all randomness (initial vectors, recovery directions).
    pub seed: u64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        SvdConfig {
            num_triplets: 1,
            which: SvdWhich::Smallest,
            tol: 1e-10,
            block_size: 1,
            max_basis: 35,
            min_restart: 21,
            max_matvecs: 1_000_000,
            stage2: Stage2Method::GdPlusK,
            seed: 0x5eed,
        }
    }
}

/// A triplet approximation together with both residual halves, as used by
/// the user-facing convergence criterion.
#[derive(Debug, Clone)]
pub struct ResidualBundle {
    /// Singular-value estimate (non-negative).
    pub sigma: f64,
    /// Right vector, unit length, in the working (tall) orientation.
    pub v: Vec<f64>,
    /// Left vector, unit length unless `left_degenerate`.
    pub u: Vec<f64>,
    /// `‖Aᵀu − σv‖`.
    pub r_u_norm: f64,
    /// `‖Av − σu‖`.
    pub r_v_norm: f64,
    /// `sqrt(r_u² + r_v²)`.
    pub combined: f64,
    /// True when `Av` vanished so no left direction could be derived.
    pub left_degenerate: bool,
    /// True when `u` was derived as `Av/σ` rather than iterated in its own
    /// right. A derived left half inherits the right half's error amplified
    /// by `1/σ`, so downstream seeding treats it as disposable for tiny σ.
    pub left_derived: bool,
}

impl ResidualBundle {
    /// Builds the bundle from a right vector alone, deriving `u = Av/σ`.
    /// By construction `Av − σu = 0`, so the combined residual reduces to
    /// `‖Aᵀu − σv‖`. Costs two products with `a`.
    ///
    /// Note the derived `u` inherits any error in `v` amplified by the
    /// ratio of the largest to the target singular value, so this form is
    /// only trustworthy for verification, not as a stage-two iterate.
    pub fn right_canonical(a: &SparseMatrix, v: &[f64]) -> ResidualBundle {
        let mut v = v.to_vec();
        normalize(&mut v);
        let mut av = vec![0.0; a.nrows()];
        a.spmv(&v, &mut av);
        let sigma = norm2(&av);
        if sigma == 0.0 {
            return ResidualBundle {
                sigma: 0.0,
                v,
                u: vec![0.0; a.nrows()],
                r_u_norm: 0.0,
                r_v_norm: 0.0,
                combined: 0.0,
                left_degenerate: true,
                left_derived: true,
            };
        }
        scale(1.0 / sigma, &mut av);
        let u = av;
        let mut ru = vec![0.0; a.ncols()];
        a.spmv_t(&u, &mut ru);
        axpy(-sigma, &v, &mut ru);
        let r_u_norm = norm2(&ru);
        ResidualBundle {
            sigma,
            v,
            u,
            r_u_norm,
            r_v_norm: 0.0,
            combined: r_u_norm,
            left_degenerate: false,
            left_derived: true,
        }
    }

    /// Builds the bundle from independently iterated left and right
    /// vectors. Returns `None` if either half has zero norm. The value is
    /// the bilinear form `uᵀAv` with the sign absorbed into `u`, so both
    /// residual halves are genuine. Costs two products with `a`.
    pub fn from_pair(a: &SparseMatrix, v: &[f64], u: &[f64]) -> Option<ResidualBundle> {
        let mut v = v.to_vec();
        let mut u = u.to_vec();
        if normalize(&mut v) == 0.0 || normalize(&mut u) == 0.0 {
            return None;
        }
        let mut av = vec![0.0; a.nrows()];
        a.spmv(&v, &mut av);
        let mut sigma = dot(&u, &av);
        if sigma < 0.0 {
            sigma = -sigma;
            scale(-1.0, &mut u);
        }
        let mut rv = av;
        axpy(-sigma, &u, &mut rv);
        let r_v_norm = norm2(&rv);
        let mut ru = vec![0.0; a.ncols()];
        a.spmv_t(&u, &mut ru);
        axpy(-sigma, &v, &mut ru);
        let r_u_norm = norm2(&ru);
        Some(ResidualBundle {
            sigma,
            v,
            u,
            r_u_norm,
            r_v_norm,
            combined: r_u_norm.hypot(r_v_norm),
            left_degenerate: false,
            left_derived: false,
        })
    }

    /// The user-facing acceptance test, strict inequality.
    pub fn meets(&self, tol: f64, a_norm: f64) -> bool {
        !self.left_degenerate && self.combined < tol * a_norm
    }
}

/// One computed singular triplet in the caller's orientation.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    /// Singular-value estimate.
    pub sigma: f64,
    /// Left vector of length `a.nrows()`.
    pub u: Vec<f64>,
    /// Right vector of length `a.ncols()`.
    pub v: Vec<f64>,
    /// Combined residual `sqrt(‖Aᵀu − σv‖² + ‖Av − σu‖²)`.
    pub residual_norm: f64,
    /// Whether the triplet satisfies `residual_norm < tol·‖A‖`.
    pub converged: bool,
    /// True when progress stopped at the attainable floor of the
    /// normal-equations stage rather than at the requested tolerance.
    pub floor_limited: bool,
    /// True when σ is numerically zero and the left vector was filled with
    /// a random unit direction (any unit vector in the null space of `Aᵀ`
    /// is equally valid only when the null space is known; this one is
    /// reported with its honest residual instead).
    pub synthetic_partner: bool,
}

/// Result of a driver run.
#[derive(Debug, Clone)]
pub struct SvdOutcome {
    /// Triplets sorted ascending for [`SvdWhich::Smallest`], descending
    /// for [`SvdWhich::Largest`].
    pub triplets: Vec<SingularTriplet>,
    /// Merged per-iteration history across every solver run, with driver
    /// annotations. Matvec counts are cumulative across stages.
    pub history: ConvergenceHistory,
    /// Total operator applications charged, including verification
    /// products performed by the driver itself.
    pub matvecs: usize,
    /// Estimate of `‖A‖` accumulated by the runs (largest Ritz value of
    /// the normal equations, square-rooted, monotone over the run).
    pub a_norm_est: f64,
    /// Whether the augmented stage ran.
    pub stage2_used: bool,
}

/// Driver failure modes.
#[derive(Debug, thiserror::Error)]
pub enum SvdError {
    /// Configuration rejected before any work.
    #[error("bad configuration: {0}")]
    BadConfig(String),
    /// The matvec budget ran out; `partial` holds the best approximations
    /// for every requested triplet with honest convergence flags.
    #[error("matvec budget exhausted after {matvecs} applications: {converged}/{requested} converged")]
    BudgetExhausted {
        /// Applications charged when the budget ran out.
        matvecs: usize,
        /// Triplets that still satisfy the user criterion.
        converged: usize,
        /// Triplets requested.
        requested: usize,
        /// Best approximations available at exhaustion.
        partial: Box<SvdOutcome>,
    },
    /// The shift-and-invert factorization failed.
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Computes singular triplets of `a` with the two-stage hybrid driver.
pub fn phsvds_solve(a: &SparseMatrix, cfg: &SvdConfig) -> Result<SvdOutcome, SvdError> {
    phsvds_solve_with(a, cfg, None, None, &[])
}

/// [`phsvds_solve`] with optional preconditioners and initial guesses.
///
/// `precond_c` must act on the short dimension (`min(m, n)`), matching the
/// internal normal-equations operator of the tall orientation;
/// `precond_b` must act on dimension `m + n` ordered `[right; left]` of the
/// tall orientation. `initial_right` supplies starting right vectors of
/// length `min(m, n)`.
pub fn phsvds_solve_with(
    a: &SparseMatrix,
    cfg: &SvdConfig,
    precond_c: Option<&Preconditioner<'_>>,
    precond_b: Option<&Preconditioner<'_>>,
    initial_right: &[Vec<f64>],
) -> Result<SvdOutcome, SvdError> {
    let (work, transposed) = orient(a);
    validate(cfg, &work)?;
    let mut driver = Driver::new(&work, cfg, transposed);
    let flow = driver.two_stage(precond_c, precond_b, initial_right)?;
    driver.finish_flow(flow)
}

/// Computes singular triplets by probing both operators and committing to
/// whichever converges faster empirically.
///
/// Both sides are probed for a bounded number of outer iterations; the
/// measured per-matvec residual reduction decides which side continues, with
/// the allowance doubling while the choice repeats and halving on a switch.
/// Once any triplet passes the user criterion before the first switch, or
/// more than one does overall, the current choice is committed and run to
/// completion. Approximations (values and both vector halves) carry across
/// every probe, so no progress is thrown away.
pub fn dynamic_switch_solve(a: &SparseMatrix, cfg: &SvdConfig) -> Result<SvdOutcome, SvdError> {
    dynamic_switch_solve_with(a, cfg, None, None, &[])
}

/// [`dynamic_switch_solve`] with optional preconditioners and guesses; the
/// conventions match [`phsvds_solve_with`].
pub fn dynamic_switch_solve_with(
    a: &SparseMatrix,
    cfg: &SvdConfig,
    precond_c: Option<&Preconditioner<'_>>,
    precond_b: Option<&Preconditioner<'_>>,
    initial_right: &[Vec<f64>],
) -> Result<SvdOutcome, SvdError> {
    let (work, transposed) = orient(a);
    validate(cfg, &work)?;
    let mut driver = Driver::new(&work, cfg, transposed);
    let flow = match cfg.which {
        // The largest values never need the augmented side, so the probe
        // machinery would only add overhead.
        SvdWhich::Largest => driver.two_stage(precond_c, precond_b, initial_right)?,
        SvdWhich::Smallest => driver.dynamic(precond_c, precond_b, initial_right)?,
    };
    driver.finish_flow(flow)
}

/// Computes singular triplets through a shift-and-invert spectral
/// transformation, factoring once and targeting the transformed extremes.
///
/// With [`ShiftInvertMode::QrOfA`] (shift must be zero) the iteration runs
/// on `(AᵀA)⁻¹` via a QR factorization of `a` and returns the smallest
/// triplets. With [`ShiftInvertMode::LuOfB`] it runs on the inverted
/// augmented matrix and returns the first singular values above the shift.
/// `guesses` live in the operator's space: length `min(m, n)` for QR mode,
/// `m + n` (ordered `[right; left]`) for LU mode. The `matvecs` count in
/// the outcome tallies applications of the *inverted* operator plus the
/// driver's verification products with `a` itself.
pub fn shift_invert_svd(
    a: &SparseMatrix,
    mode: ShiftInvertMode,
    shift: f64,
    guesses: &[Vec<f64>],
    cfg: &SvdConfig,
) -> Result<SvdOutcome, SvdError> {
    let op = shift_invert_operator(a, mode, shift)
        .map_err(|e| SvdError::Factorization(e.to_string()))?;
    match mode {
        ShiftInvertMode::QrOfA => {
            let (work, transposed) = orient(a);
            validate(cfg, &work)?;
            let mut driver = Driver::new(&work, cfg, transposed);
            let flow = driver.inverted_run(&op, guesses, Side::NormalEq, |d, vec| {
                Some(d.fresh_right(vec))
            })?;
            driver.finish_flow(flow)
        }
        ShiftInvertMode::LuOfB => {
            // The augmented factorization is built on the caller's
            // orientation, so no transposition bookkeeping applies.
            let work = Cow::Borrowed(a);
            validate(cfg, &work)?;
            let split = a.ncols();
            let mut driver = Driver::new(&work, cfg, false);
            let flow = driver.inverted_run(&op, guesses, Side::Augmented, move |d, vec| {
                let (vb, ub) = vec.split_at(split);
                d.fresh_pair(vb, ub)
            })?;
            driver.finish_flow(flow)
        }
    }
}

/// Returns the tall orientation of `a` and whether it was transposed.
fn orient(a: &SparseMatrix) -> (Cow<'_, SparseMatrix>, bool) {
    if a.nrows() >= a.ncols() {
        (Cow::Borrowed(a), false)
    } else {
        (Cow::Owned(a.transpose()), true)
    }
}

fn validate(cfg: &SvdConfig, work: &SparseMatrix) -> Result<(), SvdError> {
    let short = work.ncols();
    if cfg.num_triplets == 0 {
        return Err(SvdError::BadConfig("num_triplets must be positive".into()));
    }
    if cfg.num_triplets > short {
        return Err(SvdError::BadConfig(format!(
            "num_triplets {} exceeds min(nrows, ncols) = {}",
            cfg.num_triplets, short
        )));
    }
    if !(cfg.tol >= 0.0 && cfg.tol.is_finite()) {
        return Err(SvdError::BadConfig("tol must be finite and non-negative".into()));
    }
    if cfg.block_size == 0 {
        return Err(SvdError::BadConfig("block_size must be positive".into()));
    }
    if cfg.max_basis < 2 {
        return Err(SvdError::BadConfig("max_basis must be at least 2".into()));
    }
    Ok(())
}

/// Internal completion status: same payload, two exits.
enum Flow {
    Done {
        triplets: Vec<SingularTriplet>,
        a_norm: f64,
        stage2: bool,
    },
    Budget {
        triplets: Vec<SingularTriplet>,
        a_norm: f64,
        stage2: bool,
    },
}

/// Result of one augmented-side solver run plus the verification bundles
/// captured by the convergence hook.
enum Stage2End {
    Full(EigOutcome, Vec<Option<ResidualBundle>>),
    Budget(EigOutcome, Vec<Option<ResidualBundle>>),
}

/// Best-so-far state threaded through the dynamic probes.
struct DynState {
    bundles: Vec<ResidualBundle>,
    floors: Vec<bool>,
    verified: Vec<bool>,
    a_norm: f64,
}

impl DynState {
    fn new() -> Self {
        DynState {
            bundles: Vec::new(),
            floors: Vec::new(),
            verified: Vec::new(),
            a_norm: 0.0,
        }
    }

    /// Installs a fresh approximation for target `i` unless that slot has
    /// already passed the user criterion (verified slots never regress).
    fn put(&mut self, i: usize, bundle: ResidualBundle, floor: bool, ok: bool) {
        if i > self.bundles.len() {
            return;
        }
        if i == self.bundles.len() {
            self.bundles.push(bundle);
            self.floors.push(floor);
            self.verified.push(ok);
        } else if !self.verified[i] {
            self.bundles[i] = bundle;
            self.floors[i] = floor;
            self.verified[i] = ok;
        }
    }

    fn rights(&self) -> Vec<Vec<f64>> {
        self.bundles.iter().map(|b| b.v.clone()).collect()
    }

    fn num_verified(&self) -> usize {
        self.verified.iter().filter(|&&x| x).count()
    }

    fn all_verified(&self, k: usize) -> bool {
        self.verified.len() >= k && self.verified[..k].iter().all(|&x| x)
    }
}

struct Driver<'d> {
    work: &'d SparseMatrix,
    cfg: &'d SvdConfig,
    transposed: bool,
    mv: usize,
    history: ConvergenceHistory,
    rng: ChaCha8Rng,
}

impl<'d> Driver<'d> {
    fn new(work: &'d SparseMatrix, cfg: &'d SvdConfig, transposed: bool) -> Self {
        Driver {
            work,
            cfg,
            transposed,
            mv: 0,
            history: ConvergenceHistory::new(cfg.seed),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x00d5__u64.rotate_left(17)),
        }
    }

    fn note_event(&mut self, side: Side, idx: usize, note: &str) {
        self.history.push(HistoryEntry {
            matvecs: self.mv,
            side,
            target_index: idx,
            residual_norm: 0.0,
            locked: false,
            note: Some(note.to_string()),
        });
    }

    /// Verification bundle from a right vector; charges two products.
    fn fresh_right(&mut self, v: &[f64]) -> ResidualBundle {
        self.mv += 2;
        ResidualBundle::right_canonical(self.work, v)
    }

    /// Verification bundle from both halves; charges two products when the
    /// halves are usable.
    fn fresh_pair(&mut self, v: &[f64], u: &[f64]) -> Option<ResidualBundle> {
        let b = ResidualBundle::from_pair(self.work, v, u);
        if b.is_some() {
            self.mv += 2;
        }
        b
    }

    /// Bundles an augmented-space vector, falling back to the right half
    /// alone when the left half carries nothing.
    fn bundle_from_b_vector(&mut self, x: &[f64]) -> Option<ResidualBundle> {
        let n = self.work.ncols();
        let (vb, ub) = x.split_at(n);
        if let Some(b) = self.fresh_pair(vb, ub) {
            return Some(b);
        }
        if norm2(vb) > 0.0 {
            return Some(self.fresh_right(vb));
        }
        None
    }

    fn stage1_cfg(&self, budget: usize, max_outer: Option<usize>, stage: Side) -> EigConfig {
        EigConfig {
            num_pairs: self.cfg.num_triplets,
            which: match self.cfg.which {
                SvdWhich::Smallest => Which::SmallestAlgebraic,
                SvdWhich::Largest => Which::LargestAlgebraic,
            },
            shifts: Vec::new(),
            extraction: Extraction::RayleighRitz,
            inner: InnerSolve::None,
            tol: self.cfg.tol,
            tol_rule: TolRule::NormalEqDynamic,
            norm_est_init: 0.0,
            max_basis: self.cfg.max_basis,
            min_restart: self.cfg.min_restart,
            k_prev: 1,
            block_size: self.cfg.block_size,
            max_matvecs: budget,
            max_outer,
            init_fill: InitFill::LanczosToMinRestart,
            reintroduce_guesses: true,
            stagnation_window: 60,
            mirror_split: None,
            monotone_shifts: false,
            stage,
            seed: self.cfg.seed,
        }
    }

    fn stage2_cfg(
        &self,
        budget: usize,
        max_outer: Option<usize>,
        shifts: Vec<f64>,
        p_len: usize,
        a_norm: f64,
        stage: Side,
    ) -> EigConfig {
        EigConfig {
            num_pairs: p_len,
            which: Which::ClosestToShifts,
            shifts,
            extraction: Extraction::Refined,
            inner: match self.cfg.stage2 {
                Stage2Method::GdPlusK => InnerSolve::None,
                Stage2Method::Jdqmr { max_inner } => InnerSolve::Jd { max_inner },
            },
            // For unit-norm halves the combined user residual equals √2
            // times the augmented eigenresidual, and ‖B‖ = ‖A‖, so this
            // internal tolerance reproduces the user criterion exactly.
            tol: self.cfg.tol / SQRT_2,
            tol_rule: TolRule::FixedRelative,
            norm_est_init: a_norm,
            max_basis: self.cfg.max_basis,
            min_restart: self.cfg.min_restart,
            k_prev: 1,
            block_size: 1,
            max_matvecs: budget,
            max_outer,
            init_fill: InitFill::LanczosToMinRestart,
            reintroduce_guesses: true,
            stagnation_window: 60,
            // Every eigenvector [v; u] of the augmented matrix at +σ has a
            // mirror twin [v; −u] at −σ; deflating the twin at each lock
            // stops the solver from handing back a negated duplicate.
            mirror_split: Some(self.work.ncols()),
            monotone_shifts: true,
            stage,
            seed: self.cfg.seed ^ 0x5172_9e2b,
        }
    }

    /// Assembles augmented-space starting vectors `[v; u]` from bundles.
    /// When σ is at or below the noise level of the derived left half, the
    /// left half starts from a random direction kept clear of the other
    /// seeds, since `Av/σ` would amplify contamination by `1/σ`.
    fn stage2_guesses(&mut self, bundles: &[ResidualBundle], a_norm: f64) -> Vec<Vec<f64>> {
        let n = self.work.ncols();
        let m = self.work.nrows();
        let cutoff = a_norm * EPS.sqrt();
        let mut used_u: Vec<Vec<f64>> = Vec::new();
        let mut out = Vec::with_capacity(bundles.len());
        for (i, b) in bundles.iter().enumerate() {
            let u = if b.left_degenerate || (b.left_derived && b.sigma <= cutoff) {
                let mut r: Vec<f64> = (0..m).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
                orthogonalize_twice(&mut r, &used_u);
                normalize(&mut r);
                self.note_event(Side::Augmented, i, "left half of tiny-σ seed drawn randomly");
                r
            } else {
                b.u.clone()
            };
            let mut g = Vec::with_capacity(n + m);
            g.extend_from_slice(&b.v);
            g.extend_from_slice(&u);
            normalize(&mut g);
            used_u.push(u);
            out.push(g);
        }
        out
    }

    /// Converts a bundle into a caller-facing triplet, restoring the
    /// original orientation and filling a degenerate left half honestly.
    fn to_triplet(&mut self, b: ResidualBundle, floor: bool, converged: bool) -> SingularTriplet {
        let ResidualBundle {
            sigma,
            mut v,
            mut u,
            r_v_norm,
            combined,
            left_degenerate,
            ..
        } = b;
        let mut residual = combined;
        if left_degenerate {
            // σ vanished, so `u` carries no information from the matrix.
            // Report a random unit direction with the residual it actually
            // produces rather than pretending the half converged.
            let m = self.work.nrows();
            u = (0..m).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            normalize(&mut u);
            let mut ru = vec![0.0; self.work.ncols()];
            self.work.spmv_t(&u, &mut ru);
            self.mv += 1;
            axpy(-sigma, &v, &mut ru);
            residual = norm2(&ru).hypot(r_v_norm);
        }
        if self.transposed {
            std::mem::swap(&mut u, &mut v);
        }
        SingularTriplet {
            sigma,
            u,
            v,
            residual_norm: residual,
            converged,
            floor_limited: floor,
            synthetic_partner: left_degenerate,
        }
    }

    fn sort_triplets(&self, triplets: &mut [SingularTriplet]) {
        match self.cfg.which {
            SvdWhich::Smallest => {
                triplets.sort_by(|a, b| a.sigma.partial_cmp(&b.sigma).unwrap());
            }
            SvdWhich::Largest => {
                triplets.sort_by(|a, b| b.sigma.partial_cmp(&a.sigma).unwrap());
            }
        }
    }

    fn finish_flow(self, flow: Flow) -> Result<SvdOutcome, SvdError> {
        match flow {
            Flow::Done {
                triplets,
                a_norm,
                stage2,
            } => Ok(SvdOutcome {
                triplets,
                history: self.history,
                matvecs: self.mv,
                a_norm_est: a_norm,
                stage2_used: stage2,
            }),
            Flow::Budget {
                triplets,
                a_norm,
                stage2,
            } => {
                let converged = triplets.iter().filter(|t| t.converged).count();
                Err(SvdError::BudgetExhausted {
                    matvecs: self.mv,
                    converged,
                    requested: self.cfg.num_triplets,
                    partial: Box::new(SvdOutcome {
                        triplets,
                        history: self.history,
                        matvecs: self.mv,
                        a_norm_est: a_norm,
                        stage2_used: stage2,
                    }),
                })
            }
        }
    }

    /// The plain two-stage pipeline.
    fn two_stage(
        &mut self,
        pc: Option<&Preconditioner<'_>>,
        pb: Option<&Preconditioner<'_>>,
        initial_right: &[Vec<f64>],
    ) -> Result<Flow, SvdError> {
        let k = self.cfg.num_triplets;
        let tol = self.cfg.tol;
        let op_c = NormalEqOperator::new(self.work);

        self.note_event(Side::NormalEq, 0, "first stage: normal-equations eigensolve");
        let budget = self.cfg.max_matvecs.saturating_sub(self.mv);
        let cfg1 = self.stage1_cfg(budget, None, Side::NormalEq);
        let out1 = match gd_plus_k_solve(&op_c, pc, initial_right, &cfg1) {
            Ok(o) => o,
            Err(EigError::BadConfig(s)) => return Err(SvdError::BadConfig(s)),
            Err(EigError::BudgetExhausted { partial, .. }) => {
                let p = *partial;
                self.history.absorb(&p.history);
                self.mv += p.matvecs;
                let a_norm = p.norm_est.max(0.0).sqrt();
                let mut triplets = Vec::new();
                for pr in &p.pairs {
                    let b = self.fresh_right(&pr.vector);
                    let ok = b.meets(tol, a_norm);
                    triplets.push(self.to_triplet(b, pr.floor_limited, ok));
                }
                for (_, vec) in &p.leading {
                    if triplets.len() >= k {
                        break;
                    }
                    let b = self.fresh_right(vec);
                    let ok = b.meets(tol, a_norm);
                    triplets.push(self.to_triplet(b, false, ok));
                }
                self.sort_triplets(&mut triplets);
                return Ok(Flow::Budget {
                    triplets,
                    a_norm,
                    stage2: false,
                });
            }
        };
        self.history.absorb(&out1.history);
        self.mv += out1.matvecs;
        let a_norm = out1.norm_est.max(0.0).sqrt();
        let mut pairs = out1.pairs;

        let mut bundles: Vec<ResidualBundle> = Vec::with_capacity(k);
        for pr in &pairs {
            bundles.push(self.fresh_right(&pr.vector));
        }
        let mut user_ok: Vec<bool> = bundles.iter().map(|b| b.meets(tol, a_norm)).collect();

        let go_stage2 =
            matches!(self.cfg.which, SvdWhich::Smallest) && user_ok.iter().any(|&ok| !ok);
        if !go_stage2 {
            let mut triplets = Vec::with_capacity(k);
            for ((b, pr), ok) in bundles.into_iter().zip(&pairs).zip(&user_ok) {
                triplets.push(self.to_triplet(b, pr.floor_limited, *ok));
            }
            self.sort_triplets(&mut triplets);
            return Ok(Flow::Done {
                triplets,
                a_norm,
                stage2: false,
            });
        }

        if k > 1 {
            // A Rayleigh–Ritz pass over the converged block decouples
            // near-degenerate directions before they seed the second
            // stage: one operator product per vector.
            self.note_event(Side::NormalEq, 0, "rotating converged block before second stage");
            post_rayleigh_ritz(&op_c, &mut pairs);
            self.mv += k;
            bundles.clear();
            for pr in &pairs {
                bundles.push(self.fresh_right(&pr.vector));
            }
            user_ok = bundles.iter().map(|b| b.meets(tol, a_norm)).collect();
        }

        // Targets up to and including the last failing index go to stage
        // two; passing triplets beyond it are kept as-is but still act as
        // shift anchors through the monotone clamp.
        let p_len = user_ok.iter().rposition(|&ok| !ok).map_or(0, |i| i + 1);
        if p_len == 0 {
            let mut triplets = Vec::with_capacity(k);
            for ((b, pr), ok) in bundles.into_iter().zip(&pairs).zip(&user_ok) {
                triplets.push(self.to_triplet(b, pr.floor_limited, *ok));
            }
            self.sort_triplets(&mut triplets);
            return Ok(Flow::Done {
                triplets,
                a_norm,
                stage2: false,
            });
        }

        self.note_event(Side::Augmented, 0, "second stage: augmented-matrix refinement");
        let shifts: Vec<f64> = bundles[..p_len].iter().map(|b| b.sigma).collect();
        let guesses = self.stage2_guesses(&bundles[..p_len], a_norm);
        let end = self.stage2_run(pb, &guesses, &shifts, p_len, a_norm, None, Side::Augmented)?;

        let fallback: Vec<(ResidualBundle, bool)> = bundles
            .into_iter()
            .zip(&pairs)
            .map(|(b, pr)| (b, pr.floor_limited))
            .collect();
        let (out2, stash, exhausted) = match end {
            Stage2End::Full(o, s) => (o, s, false),
            Stage2End::Budget(o, s) => (o, s, true),
        };
        let triplets = self.assemble_after_stage2(&out2, stash, &fallback, p_len, a_norm);
        Ok(if exhausted {
            Flow::Budget {
                triplets,
                a_norm,
                stage2: true,
            }
        } else {
            Flow::Done {
                triplets,
                a_norm,
                stage2: true,
            }
        })
    }

    /// Runs the augmented-side eigensolver with the user-criterion hook
    /// installed, merges its history, and charges its products (including
    /// the two per hook call).
    fn stage2_run(
        &mut self,
        pb: Option<&Preconditioner<'_>>,
        guesses: &[Vec<f64>],
        shifts: &[f64],
        p_len: usize,
        a_norm: f64,
        max_outer: Option<usize>,
        stage: Side,
    ) -> Result<Stage2End, SvdError> {
        let op_b = AugmentedOperator::new(self.work);
        let budget = self.cfg.max_matvecs.saturating_sub(self.mv);
        let cfg2 = self.stage2_cfg(budget, max_outer, shifts.to_vec(), p_len, a_norm, stage);
        let stash: RefCell<Vec<Option<ResidualBundle>>> = RefCell::new(vec![None; p_len]);
        let extra = Cell::new(0usize);
        let n = self.work.ncols();
        let work = self.work;
        let tol = self.cfg.tol;
        let hooks = SolveHooks {
            user_converged: Some(Box::new(|idx: usize, _theta: f64, x: &[f64]| {
                extra.set(extra.get() + 2);
                let (vb, ub) = x.split_at(n);
                match ResidualBundle::from_pair(work, vb, ub) {
                    Some(b) if b.meets(tol, a_norm) => {
                        if idx < p_len {
                            stash.borrow_mut()[idx] = Some(b);
                        }
                        true
                    }
                    _ => false,
                }
            })),
            observer: None,
        };
        let res = gd_plus_k_solve_hooked(&op_b, pb, guesses, &cfg2, hooks);
        let end = match res {
            Ok(out) => Stage2End::Full(out, stash.into_inner()),
            Err(EigError::BudgetExhausted { partial, .. }) => {
                Stage2End::Budget(*partial, stash.into_inner())
            }
            Err(EigError::BadConfig(s)) => return Err(SvdError::BadConfig(s)),
        };
        {
            let out = match &end {
                Stage2End::Full(o, _) | Stage2End::Budget(o, _) => o,
            };
            self.history.absorb(&out.history);
            self.mv += out.matvecs + extra.get();
        }
        Ok(end)
    }

    /// Merges stage-two results with fallback bundles into final triplets.
    /// Index `i` takes, in order of preference: the hook-verified bundle,
    /// a fresh bundle from the locked augmented vector, the better of the
    /// leftover augmented iterate and the fallback, or the fallback alone.
    fn assemble_after_stage2(
        &mut self,
        out2: &EigOutcome,
        mut stash: Vec<Option<ResidualBundle>>,
        fallback: &[(ResidualBundle, bool)],
        p_len: usize,
        a_norm: f64,
    ) -> Vec<SingularTriplet> {
        let k = self.cfg.num_triplets;
        let tol = self.cfg.tol;
        let mut triplets = Vec::with_capacity(k);
        for i in 0..k {
            let choice: Option<(ResidualBundle, bool)> = if i < out2.pairs.len() {
                let pr = &out2.pairs[i];
                let b = if i < stash.len() { stash[i].take() } else { None };
                let b = b.or_else(|| self.bundle_from_b_vector(&pr.vector));
                match b {
                    Some(b) => Some((b, pr.floor_limited)),
                    None => fallback.get(i).cloned(),
                }
            } else if i < p_len {
                let j = i - out2.pairs.len();
                let cand = out2
                    .leading
                    .get(j)
                    .and_then(|(_, vec)| self.bundle_from_b_vector(vec));
                match (cand, fallback.get(i)) {
                    (Some(c), Some((fb, floor))) => {
                        if c.combined < fb.combined {
                            Some((c, false))
                        } else {
                            Some((fb.clone(), *floor))
                        }
                    }
                    (Some(c), None) => Some((c, false)),
                    (None, fb) => fb.cloned(),
                }
            } else {
                fallback.get(i).cloned()
            };
            if let Some((b, floor)) = choice {
                let ok = b.meets(tol, a_norm);
                triplets.push(self.to_triplet(b, floor, ok));
            }
        }
        self.sort_triplets(&mut triplets);
        triplets
    }

    /// One bounded probe on the normal-equations side. Updates the shared
    /// state from whatever the run produced and returns the measured
    /// per-matvec convergence factor (smaller is faster), if measurable,
    /// plus whether the side is capped: every requested target locked at
    /// the attainable-accuracy floor of the squared operator, meaning more
    /// iterations on this side cannot improve anything.
    fn probe_c(
        &mut self,
        pc: Option<&Preconditioner<'_>>,
        st: &mut DynState,
        guesses: &[Vec<f64>],
        max_outer: usize,
    ) -> Result<(Option<f64>, bool), SvdError> {
        let op_c = NormalEqOperator::new(self.work);
        let budget = self.cfg.max_matvecs.saturating_sub(self.mv);
        let cfg = self.stage1_cfg(budget, Some(max_outer), Side::DynamicProbe);
        let (pairs, leading, hist, norm_est, mv) = match gd_plus_k_solve(&op_c, pc, guesses, &cfg)
        {
            Ok(o) => (o.pairs, o.leading, o.history, o.norm_est, o.matvecs),
            Err(EigError::BudgetExhausted { partial, .. }) => {
                let p = *partial;
                (p.pairs, p.leading, p.history, p.norm_est, p.matvecs)
            }
            Err(EigError::BadConfig(s)) => return Err(SvdError::BadConfig(s)),
        };
        let rate = empirical_rate(&hist.entries, 0);
        let floor_capped =
            pairs.len() == self.cfg.num_triplets && pairs.iter().all(|p| p.floor_limited);
        self.history.absorb(&hist);
        self.mv += mv;
        st.a_norm = st.a_norm.max(norm_est.max(0.0).sqrt());
        let tol = self.cfg.tol;
        let n_pairs = pairs.len();
        for (i, pr) in pairs.iter().enumerate() {
            if st.verified.get(i).copied().unwrap_or(false) {
                continue;
            }
            let b = self.fresh_right(&pr.vector);
            let ok = b.meets(tol, st.a_norm);
            st.put(i, b, pr.floor_limited, ok);
        }
        for (j, (_, vec)) in leading.iter().enumerate() {
            let i = n_pairs + j;
            if i >= self.cfg.num_triplets || st.verified.get(i).copied().unwrap_or(false) {
                continue;
            }
            let b = self.fresh_right(vec);
            let ok = b.meets(tol, st.a_norm);
            st.put(i, b, false, ok);
        }
        Ok((rate, floor_capped))
    }

    /// One bounded probe on the augmented side, seeded from the state.
    fn probe_b(
        &mut self,
        pb: Option<&Preconditioner<'_>>,
        st: &mut DynState,
        max_outer: usize,
    ) -> Result<Option<f64>, SvdError> {
        if st.bundles.is_empty() {
            return Ok(None);
        }
        let k = self.cfg.num_triplets;
        let p_len = k.min(st.bundles.len());
        let shifts: Vec<f64> = st.bundles[..p_len].iter().map(|b| b.sigma).collect();
        let a_norm = st.a_norm;
        let guesses = {
            let seed_bundles: Vec<ResidualBundle> = st.bundles[..p_len].to_vec();
            self.stage2_guesses(&seed_bundles, a_norm)
        };
        let end = self.stage2_run(
            pb,
            &guesses,
            &shifts,
            p_len,
            a_norm,
            Some(max_outer),
            Side::DynamicProbe,
        )?;
        let (out, mut stash) = match end {
            Stage2End::Full(o, s) | Stage2End::Budget(o, s) => (o, s),
        };
        let rate = empirical_rate(&out.history.entries, 0);
        let tol = self.cfg.tol;
        let n_pairs = out.pairs.len();
        for (i, pr) in out.pairs.iter().enumerate() {
            if st.verified.get(i).copied().unwrap_or(false) {
                continue;
            }
            let b = if i < stash.len() { stash[i].take() } else { None };
            if let Some(b) = b.or_else(|| self.bundle_from_b_vector(&pr.vector)) {
                let ok = b.meets(tol, a_norm);
                st.put(i, b, pr.floor_limited, ok);
            }
        }
        for (j, (_, vec)) in out.leading.iter().enumerate() {
            let i = n_pairs + j;
            if i >= p_len || st.verified.get(i).copied().unwrap_or(false) {
                continue;
            }
            if let Some(b) = self.bundle_from_b_vector(vec) {
                let ok = b.meets(tol, a_norm);
                st.put(i, b, false, ok);
            }
        }
        Ok(rate)
    }

    fn flow_from_state(&mut self, st: DynState, stage2: bool, done: bool) -> Flow {
        let DynState {
            bundles,
            floors,
            verified,
            a_norm,
        } = st;
        let mut triplets = Vec::new();
        for (i, b) in bundles.into_iter().enumerate() {
            if i >= self.cfg.num_triplets {
                break;
            }
            triplets.push(self.to_triplet(b, floors[i], verified[i]));
        }
        self.sort_triplets(&mut triplets);
        if done {
            Flow::Done {
                triplets,
                a_norm,
                stage2,
            }
        } else {
            Flow::Budget {
                triplets,
                a_norm,
                stage2,
            }
        }
    }

    /// Probe-and-commit driver for the smallest singular values.
    fn dynamic(
        &mut self,
        pc: Option<&Preconditioner<'_>>,
        pb: Option<&Preconditioner<'_>>,
        initial_right: &[Vec<f64>],
    ) -> Result<Flow, SvdError> {
        const INIT_ITER: usize = 50;
        const MAX_SWITCH: usize = 6;
        let k = self.cfg.num_triplets;
        let mut st = DynState::new();

        self.note_event(Side::DynamicProbe, 0, "probing the normal equations");
        let (mut rate_c, mut c_capped) = self.probe_c(pc, &mut st, initial_right, INIT_ITER)?;
        if st.all_verified(k) {
            return Ok(self.flow_from_state(st, false, true));
        }
        self.note_event(Side::DynamicProbe, 0, "probing the augmented matrix");
        let mut rate_b = self.probe_b(pb, &mut st, INIT_ITER)?;
        if st.all_verified(k) {
            return Ok(self.flow_from_state(st, true, true));
        }

        let mut j: usize = 0;
        let mut num_switch = 0usize;
        let mut last: Option<Side> = None;
        let committed = loop {
            if self.mv >= self.cfg.max_matvecs {
                return Ok(self.flow_from_state(st, true, false));
            }
            let rc = rate_c.unwrap_or(1.0);
            let rb = rate_b.unwrap_or(1.0);
            // Ties favor the cheaper normal-equations iteration — unless
            // that side already locked everything at its accuracy floor
            // without passing verification, in which case only the
            // augmented side can still make progress.
            let chose = if c_capped || rb < rc {
                Side::Augmented
            } else {
                Side::NormalEq
            };
            let num_converged = st.num_verified();
            // Commit once convergence is under way: anything verified
            // before the first switch, or more than one verified overall.
            let decided = (num_switch == 0 && num_converged > 0) || num_converged > 1;
            if decided || num_switch >= MAX_SWITCH {
                self.history.switches.push(SwitchDecision {
                    chose,
                    rate_c: rc,
                    rate_b: rb,
                    // Zero allowance marks a run-to-completion commitment.
                    max_iter: 0,
                    num_converged,
                    num_switch,
                });
                break chose;
            }
            match last {
                Some(l) if l == chose => j += 1,
                Some(_) => {
                    num_switch += 1;
                    j /= 2;
                }
                None => {}
            }
            last = Some(chose);
            let max_iter = INIT_ITER << j.min(16);
            self.history.switches.push(SwitchDecision {
                chose,
                rate_c: rc,
                rate_b: rb,
                max_iter,
                num_converged,
                num_switch,
            });
            match chose {
                Side::Augmented => {
                    let r = self.probe_b(pb, &mut st, max_iter)?;
                    if r.is_some() {
                        rate_b = r;
                    }
                }
                _ => {
                    let guesses = st.rights();
                    let (r, capped) = self.probe_c(pc, &mut st, &guesses, max_iter)?;
                    if r.is_some() {
                        rate_c = r;
                    }
                    c_capped = capped;
                }
            }
            if st.all_verified(k) {
                return Ok(self.flow_from_state(st, true, true));
            }
        };

        match committed {
            Side::Augmented => {
                self.note_event(Side::Augmented, 0, "committed to the augmented matrix");
                let p_len = k.min(st.bundles.len());
                if p_len == 0 {
                    return Ok(self.flow_from_state(st, true, false));
                }
                let shifts: Vec<f64> = st.bundles[..p_len].iter().map(|b| b.sigma).collect();
                let a_norm = st.a_norm;
                let guesses = {
                    let seed_bundles: Vec<ResidualBundle> = st.bundles[..p_len].to_vec();
                    self.stage2_guesses(&seed_bundles, a_norm)
                };
                let end =
                    self.stage2_run(pb, &guesses, &shifts, p_len, a_norm, None, Side::Augmented)?;
                let fallback: Vec<(ResidualBundle, bool)> = st
                    .bundles
                    .iter()
                    .cloned()
                    .zip(st.floors.iter().copied())
                    .collect();
                let (out2, stash, exhausted) = match end {
                    Stage2End::Full(o, s) => (o, s, false),
                    Stage2End::Budget(o, s) => (o, s, true),
                };
                let triplets = self.assemble_after_stage2(&out2, stash, &fallback, p_len, a_norm);
                Ok(if exhausted {
                    Flow::Budget {
                        triplets,
                        a_norm,
                        stage2: true,
                    }
                } else {
                    Flow::Done {
                        triplets,
                        a_norm,
                        stage2: true,
                    }
                })
            }
            _ => {
                self.note_event(Side::NormalEq, 0, "committed to the normal equations");
                let guesses = st.rights();
                self.two_stage(pc, pb, &guesses)
            }
        }
    }

    /// Shared driver for shift-and-invert runs: solves for the largest
    /// eigenvalues of the inverted operator and re-verifies every vector
    /// against `a` itself through `bundle`.
    fn inverted_run(
        &mut self,
        op: &dyn LinearOperator,
        guesses: &[Vec<f64>],
        stage: Side,
        mut bundle: impl FnMut(&mut Self, &[f64]) -> Option<ResidualBundle>,
    ) -> Result<Flow, SvdError> {
        // The inverted runs never estimate ‖A‖ themselves (their Ritz
        // values live in the transformed spectrum), so scale the user
        // criterion with the largest column norm: a cheap lower bound on
        // the spectral norm, hence a conservative acceptance test.
        let a_norm = self
            .work
            .column_norms_squared()
            .into_iter()
            .fold(0.0f64, f64::max)
            .sqrt();
        let tol = self.cfg.tol;
        self.note_event(stage, 0, "eigensolve on the inverted operator");
        let budget = self.cfg.max_matvecs.saturating_sub(self.mv);
        let cfg = EigConfig {
            num_pairs: self.cfg.num_triplets,
            which: Which::LargestAlgebraic,
            shifts: Vec::new(),
            extraction: Extraction::RayleighRitz,
            inner: InnerSolve::None,
            tol: self.cfg.tol,
            tol_rule: TolRule::FixedRelative,
            norm_est_init: 0.0,
            max_basis: self.cfg.max_basis,
            min_restart: self.cfg.min_restart,
            k_prev: 1,
            block_size: self.cfg.block_size,
            max_matvecs: budget,
            max_outer: None,
            init_fill: InitFill::LanczosToMinRestart,
            reintroduce_guesses: true,
            stagnation_window: 60,
            mirror_split: None,
            monotone_shifts: false,
            stage,
            seed: self.cfg.seed,
        };
        let (pairs, leading, hist, mv, exhausted) =
            match gd_plus_k_solve(op, None, guesses, &cfg) {
                Ok(o) => (o.pairs, o.leading, o.history, o.matvecs, false),
                Err(EigError::BudgetExhausted { partial, .. }) => {
                    let p = *partial;
                    (p.pairs, p.leading, p.history, p.matvecs, true)
                }
                Err(EigError::BadConfig(s)) => return Err(SvdError::BadConfig(s)),
            };
        self.history.absorb(&hist);
        self.mv += mv;
        let k = self.cfg.num_triplets;
        let mut triplets = Vec::with_capacity(k);
        for pr in &pairs {
            if let Some(b) = bundle(self, &pr.vector) {
                let ok = b.meets(tol, a_norm);
                triplets.push(self.to_triplet(b, false, ok));
            }
        }
        for (_, vec) in &leading {
            if triplets.len() >= k {
                break;
            }
            if let Some(b) = bundle(self, vec) {
                let ok = b.meets(tol, a_norm);
                triplets.push(self.to_triplet(b, false, ok));
            }
        }
        self.sort_triplets(&mut triplets);
        Ok(if exhausted {
            Flow::Budget {
                triplets,
                a_norm,
                stage2: false,
            }
        } else {
            Flow::Done {
                triplets,
                a_norm,
                stage2: false,
            }
        })
    }
}

/// Rayleigh–Ritz over the span of the converged vectors (one operator
/// product per vector, charged by the caller). Rotating the block
/// decouples near-degenerate directions, which sharpens both the values
/// used as shifts and the vectors used as seeds downstream.
fn post_rayleigh_ritz(op: &dyn LinearOperator, pairs: &mut [ConvergedPair]) {
    let k = pairs.len();
    if k < 2 {
        return;
    }
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for p in pairs.iter() {
        let mut v = p.vector.clone();
        orthogonalize_twice(&mut v, &vs);
        if normalize(&mut v) == 0.0 {
            // Dependent block: keep the original vectors untouched.
            return;
        }
        vs.push(v);
    }
    let ws: Vec<Vec<f64>> = vs.iter().map(|v| op.apply_vec(v)).collect();
    let h = crate::dense::DenseMatrix::from_fn(k, k, |i, j| {
        0.5 * (dot(&vs[i], &ws[j]) + dot(&vs[j], &ws[i]))
    });
    let (thetas, y) = crate::dense::sym_eig(&h);
    let dim = vs[0].len();
    for (j, p) in pairs.iter_mut().enumerate() {
        let mut newv = vec![0.0; dim];
        for (i, vi) in vs.iter().enumerate() {
            axpy(y.get(i, j), vi, &mut newv);
        }
        normalize(&mut newv);
        p.vector = newv;
        p.value = thetas[j];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag_matrix(values: &[f64]) -> SparseMatrix {
        SparseMatrix::from_diagonal(values)
    }

    fn dense_svd_oracle(a: &SparseMatrix) -> Vec<f64> {
        let d = a.to_dense();
        let (_, sigmas, _) = crate::dense::svd(&d);
        sigmas
    }

    #[test]
    fn bundle_matches_hand_computation() {
        // A = diag(1, 2), ṽ = [0.8, 0.6]: σ̃ = ‖Aṽ‖ = √(0.64 + 1.44),
        // u = Aṽ/σ̃, and r_u = Aᵀu − σ̃ṽ worked out by hand.
        let a = diag_matrix(&[1.0, 2.0]);
        let b = ResidualBundle::right_canonical(&a, &[0.8, 0.6]);
        assert_relative_eq!(b.sigma, 2.08f64.sqrt(), epsilon = 1e-12);
        // r_u = [−0.864, 1.152]/√2.08, so ‖r_u‖ = √(2.0736/2.08).
        assert_relative_eq!(b.r_u_norm, (2.0736f64 / 2.08).sqrt(), epsilon = 1e-13);
        assert_eq!(b.r_v_norm, 0.0);
        assert_eq!(b.combined, b.r_u_norm);
        assert!(!b.left_degenerate);

        // The same v paired with its canonical u must agree.
        let p = ResidualBundle::from_pair(&a, &[0.8, 0.6], &b.u).unwrap();
        assert_relative_eq!(p.sigma, b.sigma, epsilon = 1e-12);
        assert_relative_eq!(p.combined, b.combined, epsilon = 1e-9);
        assert!(p.r_v_norm < 1e-12);
    }

    #[test]
    fn from_pair_fixes_sign_and_rejects_zeros() {
        let a = diag_matrix(&[3.0, 1.0]);
        // Flipping u negates the bilinear form; the bundle must absorb the
        // sign so σ comes back positive with the same residuals.
        let plus = ResidualBundle::from_pair(&a, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        let minus = ResidualBundle::from_pair(&a, &[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_relative_eq!(plus.sigma, 3.0, epsilon = 1e-14);
        assert_relative_eq!(minus.sigma, 3.0, epsilon = 1e-14);
        assert!(minus.combined < 1e-12);
        assert!(ResidualBundle::from_pair(&a, &[0.0, 0.0], &[1.0, 0.0]).is_none());
    }

    #[test]
    fn loose_tolerance_resolves_in_first_stage() {
        let vals: Vec<f64> = (1..=20).map(f64::from).collect();
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 3,
            tol: 1e-6,
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        assert!(!out.stage2_used);
        assert_eq!(out.triplets.len(), 3);
        for (t, want) in out.triplets.iter().zip([1.0, 2.0, 3.0]) {
            assert!(t.converged);
            assert_relative_eq!(t.sigma, want, epsilon = 1e-6);
            assert!(t.residual_norm < cfg.tol * out.a_norm_est);
        }
        assert_relative_eq!(out.a_norm_est, 20.0, epsilon = 1e-6);
    }

    #[test]
    fn largest_stays_on_normal_equations() {
        let vals: Vec<f64> = (1..=20).map(f64::from).collect();
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 2,
            which: SvdWhich::Largest,
            tol: 1e-10,
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        assert!(!out.stage2_used);
        assert_relative_eq!(out.triplets[0].sigma, 20.0, epsilon = 1e-8);
        assert_relative_eq!(out.triplets[1].sigma, 19.0, epsilon = 1e-8);
        assert!(out.triplets.iter().all(|t| t.converged));
    }

    #[test]
    fn smallest_triplet_needs_second_stage() {
        // σ₁ = 1e-7 forces the normal equations to their accuracy floor
        // (the dynamic tolerance clips at ε‖C‖), so the user criterion at
        // 1e-10 is only reachable on the augmented side.
        let mut vals = vec![1e-7];
        vals.extend((1..40).map(|i| 0.5 + 0.01 * i as f64));
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 1,
            tol: 1e-10,
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        assert!(out.stage2_used);
        let t = &out.triplets[0];
        assert!(t.converged, "residual {} vs bound {}", t.residual_norm, cfg.tol * out.a_norm_est);
        assert!(t.residual_norm < cfg.tol * out.a_norm_est);
        assert_relative_eq!(t.sigma, 1e-7, epsilon = 1e-12);
        assert!(t.v[0].abs() > 1.0 - 1e-8);
    }

    #[test]
    fn jdqmr_second_stage_converges() {
        let mut vals = vec![1e-7];
        vals.extend((1..40).map(|i| 0.5 + 0.01 * i as f64));
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 1,
            tol: 1e-10,
            stage2: Stage2Method::Jdqmr { max_inner: 15 },
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        assert!(out.stage2_used);
        let t = &out.triplets[0];
        assert!(t.converged);
        assert_relative_eq!(t.sigma, 1e-7, epsilon = 1e-12);
    }

    #[test]
    fn wide_matrix_reports_original_orientation() {
        // 15×25 wide matrix with a known graded spectrum, built by scaling
        // rows of a fixed sparse pattern; compare against the dense SVD.
        let mut triplets = Vec::new();
        for i in 0..15usize {
            for j in 0..25usize {
                if (i + 2 * j) % 7 == 0 || i == j {
                    let val = 1.0 + ((i * 31 + j * 17) % 13) as f64 * 0.3;
                    triplets.push((i, j, val));
                }
            }
        }
        let a = SparseMatrix::from_triplets(15, 25, triplets);
        let oracle = dense_svd_oracle(&a);
        let cfg = SvdConfig {
            num_triplets: 2,
            tol: 1e-9,
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        assert_eq!(out.triplets.len(), 2);
        for (t, want) in out.triplets.iter().zip(&oracle[..2]) {
            assert!(t.converged);
            assert_eq!(t.u.len(), 15);
            assert_eq!(t.v.len(), 25);
            assert_relative_eq!(t.sigma, *want, epsilon = 1e-7, max_relative = 1e-7);
            // Recompute the residual in the caller's orientation.
            let mut av = vec![0.0; 15];
            a.spmv(&t.v, &mut av);
            axpy(-t.sigma, &t.u, &mut av);
            let mut atu = vec![0.0; 25];
            a.spmv_t(&t.u, &mut atu);
            axpy(-t.sigma, &t.v, &mut atu);
            let resid = norm2(&av).hypot(norm2(&atu));
            assert!(resid < cfg.tol * out.a_norm_est);
        }
    }

    #[test]
    fn tall_matrix_matches_dense_oracle() {
        let mut triplets = Vec::new();
        for i in 0..30usize {
            for j in 0..18usize {
                if (3 * i + j) % 5 == 0 || i == j + 6 {
                    let val = 0.5 + ((i * 7 + j * 29) % 11) as f64 * 0.25;
                    triplets.push((i, j, val));
                }
            }
        }
        let a = SparseMatrix::from_triplets(30, 18, triplets);
        let oracle = dense_svd_oracle(&a);
        let cfg = SvdConfig {
            num_triplets: 3,
            tol: 1e-9,
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        for (t, want) in out.triplets.iter().zip(&oracle[..3]) {
            assert!(t.converged);
            assert_relative_eq!(t.sigma, *want, epsilon = 1e-7, max_relative = 1e-7);
        }
    }

    #[test]
    fn zero_singular_value_resolved_jointly() {
        // diag(0, 1, 2): the null direction forces σ = 0, where the left
        // half cannot be derived from the right one; the augmented stage
        // iterates both halves and still satisfies the criterion.
        let a = diag_matrix(&[0.0, 1.0, 2.0]);
        let cfg = SvdConfig {
            num_triplets: 1,
            tol: 1e-8,
            max_basis: 6,
            min_restart: 3,
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        let t = &out.triplets[0];
        assert!(t.sigma.abs() < 1e-10);
        assert!(t.converged);
        assert!(t.v[0].abs() > 1.0 - 1e-6);
        assert!(t.u[0].abs() > 1.0 - 1e-6);
    }

    #[test]
    fn budget_exhaustion_returns_partial() {
        let vals: Vec<f64> = (1..=50).map(f64::from).collect();
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 2,
            tol: 1e-12,
            max_matvecs: 8,
            ..SvdConfig::default()
        };
        match phsvds_solve(&a, &cfg) {
            Err(SvdError::BudgetExhausted {
                matvecs,
                requested,
                partial,
                ..
            }) => {
                assert!(matvecs >= 8);
                assert_eq!(requested, 2);
                assert!(!partial.triplets.is_empty());
                assert!(partial.matvecs >= 8);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let a = diag_matrix(&[1.0, 2.0]);
        let zero = SvdConfig {
            num_triplets: 0,
            ..SvdConfig::default()
        };
        assert!(matches!(
            phsvds_solve(&a, &zero),
            Err(SvdError::BadConfig(_))
        ));
        let too_many = SvdConfig {
            num_triplets: 3,
            ..SvdConfig::default()
        };
        assert!(matches!(
            phsvds_solve(&a, &too_many),
            Err(SvdError::BadConfig(_))
        ));
    }

    #[test]
    fn dynamic_switch_moderate_spectrum() {
        // Dense lower end: neither probe finishes in its first allowance,
        // so decisions get recorded before one side is committed.
        let vals: Vec<f64> = (0..200).map(|i| 0.5 + i as f64 / 400.0).collect();
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 1,
            tol: 1e-9,
            ..SvdConfig::default()
        };
        let out = dynamic_switch_solve(&a, &cfg).unwrap();
        let t = &out.triplets[0];
        assert!(t.converged);
        assert_relative_eq!(t.sigma, 0.5, epsilon = 1e-7);
        assert!(t.residual_norm < cfg.tol * out.a_norm_est);
    }

    #[test]
    fn dynamic_switch_reaches_floor_problem() {
        // σ₁ far below the normal-equations floor at this tolerance; only
        // the augmented side can finish, and the dynamic driver must find
        // its way there.
        let mut vals = vec![1e-9];
        vals.extend((1..40).map(|i| 0.5 + 0.0125 * i as f64));
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 1,
            tol: 1e-12,
            ..SvdConfig::default()
        };
        let out = dynamic_switch_solve(&a, &cfg).unwrap();
        let t = &out.triplets[0];
        assert!(t.converged, "residual {} vs {}", t.residual_norm, cfg.tol * out.a_norm_est);
        assert_relative_eq!(t.sigma, 1e-9, epsilon = 1e-13);
        assert!(out.stage2_used);
    }

    #[test]
    fn dynamic_decisions_are_recorded() {
        // Clustered smallest values slow both sides down enough that the
        // controller has to grant at least one extended allowance.
        let mut vals = vec![0.100, 0.1004, 0.1008];
        vals.extend((1..120).map(|i| 0.3 + i as f64 * 0.01));
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 2,
            tol: 1e-11,
            ..SvdConfig::default()
        };
        let out = dynamic_switch_solve(&a, &cfg).unwrap();
        assert!(out.triplets.iter().all(|t| t.converged));
        assert_relative_eq!(out.triplets[0].sigma, 0.100, epsilon = 1e-8);
        assert_relative_eq!(out.triplets[1].sigma, 0.1004, epsilon = 1e-8);
        assert!(
            !out.history.switches.is_empty(),
            "expected at least one recorded decision"
        );
    }

    #[test]
    fn shift_invert_qr_finds_smallest() {
        let vals: Vec<f64> = (2..=40).map(f64::from).collect();
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 2,
            tol: 1e-9,
            ..SvdConfig::default()
        };
        let ones = vec![vec![1.0; 39]];
        let out = shift_invert_svd(&a, ShiftInvertMode::QrOfA, 0.0, &ones, &cfg).unwrap();
        assert_relative_eq!(out.triplets[0].sigma, 2.0, epsilon = 1e-8);
        assert_relative_eq!(out.triplets[1].sigma, 3.0, epsilon = 1e-8);
        assert!(out.triplets.iter().all(|t| t.converged));
        assert!(!out.stage2_used);
    }

    #[test]
    fn shift_invert_lu_targets_above_shift() {
        // Inverting the augmented matrix at shift 4.3 makes the first
        // singular value above the shift the dominant transformed
        // eigenvalue, so σ = 5 is returned rather than the nearer σ = 4.
        let vals: Vec<f64> = (1..=10).map(f64::from).collect();
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 1,
            tol: 1e-9,
            ..SvdConfig::default()
        };
        let out = shift_invert_svd(&a, ShiftInvertMode::LuOfB, 4.3, &[], &cfg).unwrap();
        assert_relative_eq!(out.triplets[0].sigma, 5.0, epsilon = 1e-8);
        assert!(out.triplets[0].converged);
    }

    #[test]
    fn shift_invert_rejects_impossible_factorization() {
        let a = diag_matrix(&[1.0, 2.0]);
        let err = shift_invert_svd(&a, ShiftInvertMode::QrOfA, 0.5, &[], &SvdConfig::default());
        assert!(matches!(err, Err(SvdError::Factorization(_))));
    }

    #[test]
    fn wide_and_tall_transposes_agree() {
        let mut triplets = Vec::new();
        for i in 0..12usize {
            for j in 0..20usize {
                if (i + j) % 4 == 0 {
                    triplets.push((i, j, 1.0 + ((i * 5 + j) % 7) as f64));
                }
            }
        }
        let wide = SparseMatrix::from_triplets(12, 20, triplets);
        let tall = wide.transpose();
        let cfg = SvdConfig {
            num_triplets: 2,
            tol: 1e-9,
            ..SvdConfig::default()
        };
        let ow = phsvds_solve(&wide, &cfg).unwrap();
        let ot = phsvds_solve(&tall, &cfg).unwrap();
        for (tw, tt) in ow.triplets.iter().zip(&ot.triplets) {
            assert_relative_eq!(tw.sigma, tt.sigma, epsilon = 1e-8, max_relative = 1e-8);
            assert_eq!(tw.u.len(), tt.v.len());
            assert_eq!(tw.v.len(), tt.u.len());
        }
    }

    #[test]
    fn history_spans_both_stages() {
        let mut vals = vec![1e-7];
        vals.extend((1..30).map(|i| 0.5 + 0.01 * i as f64));
        let a = diag_matrix(&vals);
        let cfg = SvdConfig {
            num_triplets: 1,
            tol: 1e-10,
            ..SvdConfig::default()
        };
        let out = phsvds_solve(&a, &cfg).unwrap();
        let has_c = out
            .history
            .entries
            .iter()
            .any(|e| e.side == Side::NormalEq && e.note.is_none());
        let has_b = out
            .history
            .entries
            .iter()
            .any(|e| e.side == Side::Augmented && e.note.is_none());
        assert!(has_c && has_b);
        // Cumulative counts never decrease and end at the driver total.
        let mut prev = 0;
        for e in &out.history.entries {
            assert!(e.matvecs >= prev);
            prev = e.matvecs;
        }
        assert!(prev <= out.matvecs);
    }
}
