//! Per-iteration convergence records.
//!
//! Every solver in the crate appends one entry per outer iteration: the
//! cumulative matrix-vector count, which matrix it was iterating on, the
//! targeted pair and its residual norm. The dynamic variant additionally
//! logs each switching decision. Histories are the raw material for the
//! empirical-rate estimates and for the run reports the CLI emits.

/// Which matrix an iteration ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Normal equations `C = AᵀA`.
    NormalEq,
    /// Augmented matrix `B = [0 Aᵀ; A 0]`.
    Augmented,
    /// Probe run of the dynamic variant (either matrix; see the entry note).
    DynamicProbe,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::NormalEq => write!(f, "C"),
            Side::Augmented => write!(f, "B"),
            Side::DynamicProbe => write!(f, "probe"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HistoryEntry {
    /// Cumulative products with `A` (products with `A` and `Aᵀ` come in
    /// pairs everywhere, so one count covers both).
    pub matvecs: usize,
    pub side: Side,
    /// Index of the pair this iteration targeted (locked pairs included).
    pub target_index: usize,
    /// Residual norm of the targeted pair, in the iterated matrix's metric.
    pub residual_norm: f64,
    /// True when a pair was locked at this iteration; rate estimates skip
    /// the jump that follows.
    pub locked: bool,
    /// Free-form annotation (random restart, skipped guess, ...).
    pub note: Option<String>,
}

/// One decision point of the dynamic switching loop.
#[derive(Debug, Clone)]
pub struct SwitchDecision {
    /// Side chosen for the next run.
    pub chose: Side,
    /// Latest average convergence-rate estimates (smaller is faster).
    pub rate_c: f64,
    pub rate_b: f64,
    /// Iteration budget granted to the chosen run.
    pub max_iter: usize,
    /// Converged pairs accumulated so far (both sides).
    pub num_converged: usize,
    /// How many switch decisions happened before this one.
    pub num_switch: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceHistory {
    pub entries: Vec<HistoryEntry>,
    pub switches: Vec<SwitchDecision>,
    /// Seed of the PRNG that drove any randomized choices in the run.
    pub seed: u64,
}

impl ConvergenceHistory {
    pub fn new(seed: u64) -> Self {
        ConvergenceHistory { entries: Vec::new(), switches: Vec::new(), seed }
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        debug_assert!(
            self.entries.last().map_or(true, |last| last.matvecs <= entry.matvecs),
            "matvec counts must be non-decreasing"
        );
        self.entries.push(entry);
    }

    /// Total matvecs recorded so far (0 for an empty history).
    pub fn matvecs(&self) -> usize {
        self.entries.last().map_or(0, |e| e.matvecs)
    }

    /// Appends another history, keeping the matvec count cumulative.
    pub fn absorb(&mut self, other: &ConvergenceHistory) {
        let base = self.matvecs();
        for e in &other.entries {
            self.push(HistoryEntry { matvecs: base + e.matvecs, ..e.clone() });
        }
        self.switches.extend(other.switches.iter().cloned());
    }
}
