//! A-priori convergence-rate estimates from singular spectra, plus
//! a-posteriori rate measurement from run histories.
//!
//! The a-priori bounds model an unrestarted Krylov iteration and answer one
//! question: for a given spectrum, is it cheaper to reach the extreme
//! singular values through the normal equations `AᵀA` (whose spectrum is the
//! squared singular values) or through the augmented matrix `[0 Aᵀ; A 0]`
//! (whose spectrum is `±σ`)? Squaring widens relative gaps at the top of the
//! spectrum and crushes them at the bottom, but the augmented matrix pays
//! for its two-sided spectrum, so the answer is a genuine trade-off.
//!
//! The a-posteriori measurement reduces a convergence history to one number,
//! the geometric-mean residual contraction per matrix product, which is what
//! the dynamic solver compares when it decides which matrix to iterate on.

use crate::dense::DenseMatrix;
use crate::history::HistoryEntry;
use crate::vecops::dot;

fn check_spectrum(sigmas: &[f64]) {
    assert!(sigmas.len() >= 2, "rate bounds need at least two singular values");
    for w in sigmas.windows(2) {
        assert!(w[0] <= w[1], "singular values must be sorted ascending");
    }
    assert!(sigmas[0] >= 0.0, "singular values must be non-negative");
}

/// Relative gaps that govern convergence to the largest singular value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRatios {
    /// Gap ratio on the augmented matrix: `(σₙ − σₙ₋₁) / (σₙ₋₁ + σₙ)`.
    pub augmented: f64,
    /// Gap ratio on the normal equations: `(σₙ² − σₙ₋₁²) / (σₙ₋₁² − σ₁²)`,
    /// `+∞` when the denominator vanishes.
    pub normal: f64,
}

/// Gap ratios for the largest singular value on both operators.
///
/// Squaring helps at this end: `√normal > 2√augmented` whenever
/// `σₙ₋₁ > σ₁`, so the normal equations converge at least twice as fast per
/// iteration to the top of the spectrum.
pub fn gap_ratios_largest(sigmas: &[f64]) -> GapRatios {
    check_spectrum(sigmas);
    let n = sigmas.len();
    let (s1, sp, sn) = (sigmas[0], sigmas[n - 2], sigmas[n - 1]);
    GapRatios {
        augmented: (sn - sp) / (sp + sn),
        normal: (sn * sn - sp * sp) / (sp * sp - s1 * s1),
    }
}

/// Per-iteration residual contraction factor for the smallest singular
/// value when iterating on the augmented matrix, from the minimax
/// polynomial on `[−σₙ, −σ₁] ∪ [σ₂, σₙ]`:
/// `1 − √(2σ₁(σ₂ − σ₁) / ((σₙ − σ₁)(σₙ + σ₁)))`.
///
/// Values close to one mean slow convergence.
pub fn rate_bound_augmented(sigmas: &[f64]) -> f64 {
    check_spectrum(sigmas);
    let (s1, s2, sn) = (sigmas[0], sigmas[1], *sigmas.last().unwrap());
    let (a, b, c, d) = (sn + s1, 2.0 * s1, s2 - s1, sn - s1);
    if d == 0.0 || a == 0.0 {
        return 1.0;
    }
    1.0 - (b * c / (d * a)).sqrt()
}

/// Contraction bound for the smallest singular value on the normal
/// equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalRate {
    /// Squared-spectrum gap ratio `γ = (σ₂² − σ₁²) / (σₙ² − σ₂²)`.
    pub gap: f64,
    /// Linear bound `1 − 2√γ`; only meaningful for `γ < 1/4`, `None`
    /// otherwise (the iteration then converges in a handful of steps and
    /// the asymptotic model does not apply).
    pub factor: Option<f64>,
    /// Asymptotic form `e^{−2√γ}`, valid for any gap.
    pub factor_exp: f64,
}

pub fn rate_bound_normal(sigmas: &[f64]) -> NormalRate {
    check_spectrum(sigmas);
    let (s1, s2, sn) = (sigmas[0], sigmas[1], *sigmas.last().unwrap());
    let gap = (s2 * s2 - s1 * s1) / (sn * sn - s2 * s2);
    NormalRate {
        gap,
        factor: (gap < 0.25).then(|| 1.0 - 2.0 * gap.sqrt()),
        factor_exp: (-2.0 * gap.sqrt()).exp(),
    }
}

/// Expected per-iteration speedup of the normal equations over the
/// augmented matrix for the smallest singular value: the ratio of the two
/// contraction factors. Greater than one means the normal equations win
/// (as long as they can reach the accuracy at all); `None` when the
/// squared-spectrum gap is too large for the linear bound.
pub fn speedup_tau(sigmas: &[f64]) -> Option<f64> {
    let rho = rate_bound_augmented(sigmas);
    rate_bound_normal(sigmas).factor.map(|q| rho / q)
}

/// Smallest absolute gap separating any of the `k` smallest singular
/// values from the rest of the spectrum. This is the quantity that divides
/// the residual norm in eigenvector error bounds, so a tiny value here
/// warns that vectors will carry many fewer digits than values.
pub fn min_gap_among_targets(sigmas: &[f64], k: usize) -> f64 {
    check_spectrum(sigmas);
    let k = k.min(sigmas.len());
    let mut best = f64::INFINITY;
    for i in 0..k {
        for (j, s) in sigmas.iter().enumerate() {
            if j != i {
                best = best.min((sigmas[i] - s).abs());
            }
        }
    }
    best
}

/// Angle diagnostics of an approximate eigenvector against a known
/// eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleReport {
    /// Sine of the angle between `x` and the eigenvector whose eigenvalue
    /// is nearest the requested target.
    pub sin_angle: f64,
    /// Rayleigh-quotient excess over the target eigenvalue predicted by
    /// the expansion coefficients: `Σ_{i≠t} cᵢ²(λᵢ − λ_t) / ‖c‖²`. Errors
    /// in the value are quadratic in the angle while errors in the vector
    /// are linear — this makes the imbalance visible.
    pub rq_excess: f64,
}

/// Expands `x` in the orthonormal eigenbasis `vectors` (columns) with
/// eigenvalues `values` and reports the angle to the eigenvector nearest
/// `target`.
pub fn eigvec_angles(
    x: &[f64],
    values: &[f64],
    vectors: &DenseMatrix,
    target: f64,
) -> AngleReport {
    assert_eq!(values.len(), vectors.ncols());
    assert_eq!(x.len(), vectors.nrows());
    let c = vectors.tr_matvec(x);
    let total = dot(&c, &c);
    assert!(total > 0.0, "the vector must have a component in the basis");
    let t = (0..values.len())
        .min_by(|&a, &b| (values[a] - target).abs().partial_cmp(&(values[b] - target).abs()).unwrap())
        .unwrap();
    let off = (total - c[t] * c[t]).max(0.0);
    let rq_excess =
        c.iter().zip(values).enumerate().filter(|&(i, _)| i != t).map(|(_, (ci, l))| ci * ci * (l - values[t])).sum::<f64>()
            / total;
    AngleReport { sin_angle: (off / total).sqrt(), rq_excess }
}

/// Geometric-mean residual contraction per matrix product over the last
/// `window` productive history steps (`window == 0` uses all of them).
///
/// Only genuine iteration entries count: event annotations and locking
/// entries are skipped, and steps are paired only within the same side and
/// target. An exact zero residual short-circuits to `Some(0.0)`. Returns
/// `None` when the history has no measurable step.
pub fn empirical_rate(entries: &[HistoryEntry], window: usize) -> Option<f64> {
    let mut factors: Vec<f64> = Vec::new();
    let mut prev: Option<&HistoryEntry> = None;
    for e in entries {
        if e.locked || e.note.is_some() {
            continue;
        }
        if let Some(p) = prev {
            if p.side == e.side && p.target_index == e.target_index && e.matvecs > p.matvecs {
                if p.residual_norm > 0.0 {
                    if e.residual_norm == 0.0 {
                        return Some(0.0);
                    }
                    let dm = (e.matvecs - p.matvecs) as f64;
                    factors.push((e.residual_norm / p.residual_norm).powf(1.0 / dm));
                }
            }
        }
        prev = Some(e);
    }
    if factors.is_empty() {
        return None;
    }
    let tail = if window == 0 || window >= factors.len() {
        &factors[..]
    } else {
        &factors[factors.len() - window..]
    };
    let log_mean = tail.iter().map(|f| f.ln()).sum::<f64>() / tail.len() as f64;
    Some(log_mean.exp())
}

/// One-stop spectrum report used by the command-line `analyze` view.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    pub count: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `σ_max / σ_min`, `+∞` for singular spectra.
    pub condition: f64,
    pub rate_augmented: f64,
    pub rate_normal: Option<f64>,
    pub rate_normal_exp: f64,
    pub speedup: Option<f64>,
    pub largest_gaps: GapRatios,
    /// Absolute gap isolating the smallest singular value.
    pub min_gap_smallest: f64,
}

pub fn summarize_spectrum(sigmas_ascending: &[f64]) -> SpectrumSummary {
    check_spectrum(sigmas_ascending);
    let normal = rate_bound_normal(sigmas_ascending);
    SpectrumSummary {
        count: sigmas_ascending.len(),
        sigma_min: sigmas_ascending[0],
        sigma_max: *sigmas_ascending.last().unwrap(),
        condition: if sigmas_ascending[0] > 0.0 {
            sigmas_ascending.last().unwrap() / sigmas_ascending[0]
        } else {
            f64::INFINITY
        },
        rate_augmented: rate_bound_augmented(sigmas_ascending),
        rate_normal: normal.factor,
        rate_normal_exp: normal.factor_exp,
        speedup: speedup_tau(sigmas_ascending),
        largest_gaps: gap_ratios_largest(sigmas_ascending),
        min_gap_smallest: min_gap_among_targets(sigmas_ascending, 1),
    }
}

/// Residual-based error bounds for a computed value/vector pair: the value
/// is wrong by at most `‖r‖²/gap + ε‖A‖`-type terms while the vector angle
/// is bounded by `‖r‖/gap`, so both are reported side by side.
pub fn error_bounds(residual_norm: f64, gap: f64) -> (f64, f64) {
    if gap <= 0.0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    (residual_norm * residual_norm / gap, residual_norm / gap)
}
