//! Subcommand implementations.
//!
//! Each `cmd_*` function takes its parsed arguments and returns the process
//! exit code: `0` for full success, `2` when a solve finished without full
//! convergence (budget exhausted or accuracy-floor-limited triplets), and
//! any error message maps to `1` in `main`.

use crate::report::{
    AnalyzeReport, ConfigEcho, GapEntry, MatrixInfo, RunReport, SwitchRow, TraceRow, TripletReport,
    SCHEMA_VERSION,
};
use clap::{Args, ValueEnum};
use phsvds::eigensolver::{EigError, Extraction, TolRule, Which};
use phsvds::history::Side;
use phsvds::operators::{ilu0, AugmentedOperator, NormalEqOperator, ShiftInvertMode};
use phsvds::{
    dense, dynamic_switch_solve_with, gd_plus_k_solve, lanczos_unrestarted, lbd_unrestarted,
    mtx, phsvds_solve_with, shift_invert_svd, ConvergenceHistory, EigConfig, LanczosConfig,
    LanczosTarget, LbdConfig, Preconditioner, SingularTriplet, SparseMatrix, Stage2Method,
    SvdConfig, SvdError, SvdOutcome, SvdWhich,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Matrices at or below this short dimension get a dense decomposition in
/// `analyze`; larger ones get Krylov estimates flagged as such.
const DENSE_LIMIT: usize = 400;

/// Inner-iteration cap when the second stage runs its Krylov correction.
const JDQMR_MAX_INNER: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhichArg {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage2Arg {
    /// Olsen-style single correction per outer iteration.
    Gdk,
    /// Inner quasi-minimal-residual correction solves.
    Jdqmr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    None,
    /// Inverse squared column norms (and their augmented lift).
    Jacobi,
    /// Zero-fill incomplete LU of a square matrix.
    Ilu0,
    /// Invert the normal equations exactly through a QR factorization.
    ShiftInvertQr,
    /// Invert the shifted augmented matrix through a dense LU factorization.
    ShiftInvertLu,
}

impl PrecondArg {
    fn name(self) -> &'static str {
        match self {
            PrecondArg::None => "none",
            PrecondArg::Jacobi => "jacobi",
            PrecondArg::Ilu0 => "ilu0",
            PrecondArg::ShiftInvertQr => "shift-invert-qr",
            PrecondArg::ShiftInvertLu => "shift-invert-lu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Diagonal with two values near machine precision, four near 1e-8,
    /// and a thousand-point plateau from 1e-3 to 1.
    Table1,
    /// Diagonal with values 1..10 followed by a dense ramp up to 1e6.
    Fig3,
    /// Diagonal with values 1..size.
    Diag,
}

#[derive(Args, Debug)]
pub struct SvdsArgs {
    /// Matrix Market file holding the input matrix.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Number of singular triplets to compute.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Which end of the spectrum to target.
    #[arg(long, value_enum, default_value_t = WhichArg::Smallest)]
    pub which: WhichArg,
    /// Relative tolerance: sqrt(|A'u-sv|^2 + |Av-su|^2) < tol * |A|.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Correction strategy for the augmented second stage.
    #[arg(long, value_enum, default_value_t = Stage2Arg::Gdk)]
    pub stage2: Stage2Arg,
    /// Preconditioner; defaults to jacobi under --dynamic, none otherwise.
    #[arg(long, value_enum)]
    pub precond: Option<PrecondArg>,
    /// Residuals expanded per iteration in the first stage.
    #[arg(long, default_value_t = 1)]
    pub block: usize,
    /// Maximum basis size before a thick restart.
    #[arg(long, default_value_t = 35)]
    pub max_basis: usize,
    /// Basis size kept at a restart.
    #[arg(long, default_value_t = 21)]
    pub min_restart: usize,
    /// Probe both operators at run time and commit to the faster one.
    #[arg(long)]
    pub dynamic: bool,
    /// Seed for randomized choices; the PHSVDS_SEED variable overrides it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report format.
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    pub out_file: Option<PathBuf>,
    /// Start from a random unit vector instead of normalized ones.
    #[arg(long)]
    pub random_guess: bool,
    /// Target shift; only meaningful with --precond shift-invert-lu.
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
    /// Budget of operator applications across both stages.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_matvecs: usize,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Matrix Market file to analyze.
    #[arg(long, required_unless_present = "sigma_list", conflicts_with = "sigma_list")]
    pub matrix: Option<PathBuf>,
    /// Comma-separated singular values to analyze instead of a matrix.
    #[arg(long)]
    pub sigma_list: Option<String>,
    /// Number of targeted smallest values for the gap statistics.
    #[arg(long)]
    pub k: Option<usize>,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    pub out_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Matrix Market file holding the input matrix.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Spectrum end to trace; only "smallest" is supported.
    #[arg(long, default_value = "smallest")]
    pub target: String,
    /// Iteration budget per traced method.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// true traces only the restarted solver; false adds the unrestarted
    /// baselines.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub restarted: bool,
    /// Residual tolerance for every traced method.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Write the CSV to this file instead of stdout.
    #[arg(long)]
    pub out_file: Option<PathBuf>,
    /// Seed for randomized choices; the PHSVDS_SEED variable overrides it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Which matrix family to write.
    #[arg(value_enum)]
    pub kind: GenKind,
    /// Dimension of the diag family (ignored by the fixed families).
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// Output Matrix Market path.
    #[arg(long)]
    pub out: PathBuf,
}

// ---------------------------------------------------------------------------
// svds

pub fn cmd_svds(args: &SvdsArgs) -> Result<u8, String> {
    let seed = resolve_seed(args.seed)?;
    let a = read_matrix(&args.matrix)?;
    let precond =
        args.precond.unwrap_or(if args.dynamic { PrecondArg::Jacobi } else { PrecondArg::None });
    if args.shift != 0.0 && precond != PrecondArg::ShiftInvertLu {
        return Err("--shift is only meaningful with --precond shift-invert-lu".into());
    }
    let cfg = SvdConfig {
        num_triplets: args.k,
        which: match args.which {
            WhichArg::Smallest => SvdWhich::Smallest,
            WhichArg::Largest => SvdWhich::Largest,
        },
        tol: args.tol,
        block_size: args.block,
        max_basis: args.max_basis,
        min_restart: args.min_restart,
        max_matvecs: args.max_matvecs,
        stage2: match args.stage2 {
            Stage2Arg::Gdk => Stage2Method::GdPlusK,
            Stage2Arg::Jdqmr => Stage2Method::Jdqmr { max_inner: JDQMR_MAX_INNER },
        },
        seed,
    };

    // Guess vectors live in the iterated operator's space: the short
    // dimension normally, the full augmented dimension for the LU-inverted
    // augmented run.
    let guess_dim = match precond {
        PrecondArg::ShiftInvertLu => a.nrows() + a.ncols(),
        _ => a.nrows().min(a.ncols()),
    };
    let guesses: Vec<Vec<f64>> = if args.random_guess {
        Vec::new()
    } else {
        vec![vec![1.0 / (guess_dim as f64).sqrt(); guess_dim]]
    };

    let started = Instant::now();
    let (outcome, exhausted) = run_solver(&a, &cfg, args, precond, &guesses)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let report = build_report(args, precond, &a, seed, &outcome, wall_seconds, exhausted);
    let text = match args.out {
        OutFormat::Json => report.to_json(),
        OutFormat::Csv => report.triplets_csv(),
    };
    write_output(&text, args.out_file.as_deref())?;
    Ok(if report.full_convergence { 0 } else { 2 })
}

/// Runs the configured driver; a budget exhaustion is reported as a partial
/// outcome, not an error.
fn run_solver(
    a: &SparseMatrix,
    cfg: &SvdConfig,
    args: &SvdsArgs,
    precond: PrecondArg,
    guesses: &[Vec<f64>],
) -> Result<(SvdOutcome, bool), String> {
    let settle = |res: Result<SvdOutcome, SvdError>| match res {
        Ok(o) => Ok((o, false)),
        Err(SvdError::BudgetExhausted { partial, .. }) => Ok((*partial, true)),
        Err(e) => Err(e.to_string()),
    };
    let no_dynamic = |name: &str| -> Result<(), String> {
        if args.dynamic {
            Err(format!("--dynamic cannot be combined with --precond {name}"))
        } else {
            Ok(())
        }
    };
    match precond {
        PrecondArg::ShiftInvertQr => {
            no_dynamic("shift-invert-qr")?;
            settle(shift_invert_svd(a, ShiftInvertMode::QrOfA, 0.0, guesses, cfg))
        }
        PrecondArg::ShiftInvertLu => {
            no_dynamic("shift-invert-lu")?;
            settle(shift_invert_svd(a, ShiftInvertMode::LuOfB, args.shift, guesses, cfg))
        }
        PrecondArg::None => {
            if args.dynamic {
                settle(dynamic_switch_solve_with(a, cfg, None, None, guesses))
            } else {
                settle(phsvds_solve_with(a, cfg, None, None, guesses))
            }
        }
        PrecondArg::Jacobi => {
            // Both preconditioners are built on the tall orientation, the
            // same one the driver iterates internally.
            let owned_tall;
            let tall: &SparseMatrix = if a.nrows() >= a.ncols() {
                a
            } else {
                owned_tall = a.transpose();
                &owned_tall
            };
            let pc = Preconditioner::jacobi_for_c(tall);
            let pb = Preconditioner::jacobi_for_b(tall);
            if args.dynamic {
                settle(dynamic_switch_solve_with(a, cfg, Some(&pc), Some(&pb), guesses))
            } else {
                settle(phsvds_solve_with(a, cfg, Some(&pc), Some(&pb), guesses))
            }
        }
        PrecondArg::Ilu0 => {
            if a.nrows() != a.ncols() {
                return Err("ilu0 preconditioning needs a square matrix".into());
            }
            let factors = ilu0(a).map_err(|e| e.to_string())?;
            let pc = factors.preconditioner_for_c();
            let pb = factors.preconditioner_for_b();
            if args.dynamic {
                settle(dynamic_switch_solve_with(a, cfg, Some(&pc), Some(&pb), guesses))
            } else {
                settle(phsvds_solve_with(a, cfg, Some(&pc), Some(&pb), guesses))
            }
        }
    }
}

fn build_report(
    args: &SvdsArgs,
    precond: PrecondArg,
    a: &SparseMatrix,
    seed: u64,
    outcome: &SvdOutcome,
    wall_seconds: f64,
    exhausted: bool,
) -> RunReport {
    let triplets: Vec<TripletReport> = outcome
        .triplets
        .iter()
        .enumerate()
        .map(|(i, t)| triplet_report(a, i, t))
        .collect();
    let full_convergence = !exhausted
        && triplets.len() == args.k
        && outcome.triplets.iter().all(|t| t.converged);
    RunReport {
        schema_version: SCHEMA_VERSION,
        config: ConfigEcho {
            matrix: args.matrix.display().to_string(),
            k: args.k,
            which: match args.which {
                WhichArg::Smallest => "smallest".into(),
                WhichArg::Largest => "largest".into(),
            },
            tol: args.tol,
            stage2: match args.stage2 {
                Stage2Arg::Gdk => "gdk".into(),
                Stage2Arg::Jdqmr => "jdqmr".into(),
            },
            precond: precond.name().into(),
            block: args.block,
            max_basis: args.max_basis,
            min_restart: args.min_restart,
            dynamic: args.dynamic,
            random_guess: args.random_guess,
            shift: args.shift,
            max_matvecs: args.max_matvecs,
        },
        matrix: MatrixInfo { nrows: a.nrows(), ncols: a.ncols(), nnz: a.nnz() },
        seed,
        a_norm_est: outcome.a_norm_est,
        stage2_used: outcome.stage2_used,
        matvecs: outcome.matvecs,
        wall_seconds,
        full_convergence,
        triplets,
        history: outcome
            .history
            .entries
            .iter()
            .map(|e| TraceRow {
                matvecs: e.matvecs,
                side: e.side.to_string(),
                target: e.target_index,
                residual: e.residual_norm,
                locked: e.locked,
                note: e.note.clone(),
            })
            .collect(),
        switches: outcome
            .history
            .switches
            .iter()
            .map(|s| SwitchRow {
                chose: s.chose.to_string(),
                rate_c: s.rate_c,
                rate_b: s.rate_b,
                max_iter: s.max_iter,
                num_converged: s.num_converged,
                num_switch: s.num_switch,
            })
            .collect(),
    }
}

/// Recomputes both residual halves from scratch in the caller's orientation,
/// so the report never repeats a number the solver merely claimed.
fn triplet_report(a: &SparseMatrix, index: usize, t: &SingularTriplet) -> TripletReport {
    let mut r_u = vec![0.0; a.ncols()];
    a.spmv_t(&t.u, &mut r_u);
    for (r, v) in r_u.iter_mut().zip(&t.v) {
        *r -= t.sigma * v;
    }
    let mut r_v = vec![0.0; a.nrows()];
    a.spmv(&t.v, &mut r_v);
    for (r, u) in r_v.iter_mut().zip(&t.u) {
        *r -= t.sigma * u;
    }
    let r_u_norm = norm2(&r_u);
    let r_v_norm = norm2(&r_v);
    TripletReport {
        index,
        sigma: t.sigma,
        r_u_norm,
        r_v_norm,
        residual_norm: r_u_norm.hypot(r_v_norm),
        converged: t.converged,
        floor_limited: t.floor_limited,
        synthetic_partner: t.synthetic_partner,
    }
}

// ---------------------------------------------------------------------------
// analyze

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<u8, String> {
    let (sigmas, source, estimated, estimate_converged) = match (&args.sigma_list, &args.matrix) {
        (Some(list), _) => (parse_sigma_list(list)?, "sigma-list".to_string(), false, None),
        (None, Some(path)) => {
            let a = read_matrix(path)?;
            let (sigmas, estimated, converged) = spectrum_of(&a, args.k.unwrap_or(10));
            (sigmas, path.display().to_string(), estimated, converged)
        }
        (None, None) => unreachable!("clap enforces --matrix or --sigma-list"),
    };
    let report = analyze_spectrum(&sigmas, source, estimated, estimate_converged, args.k);
    write_output(&report.to_json(), args.out_file.as_deref())?;
    Ok(0)
}

fn parse_sigma_list(list: &str) -> Result<Vec<f64>, String> {
    let mut sigmas = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v: f64 = part
            .parse()
            .map_err(|_| format!("--sigma-list holds a non-numeric entry: {part:?}"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("singular values must be finite and non-negative, got {v}"));
        }
        sigmas.push(v);
    }
    if sigmas.is_empty() {
        return Err("--sigma-list holds no values".into());
    }
    sigmas.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(sigmas)
}

/// Full spectrum when the short dimension admits the dense decomposition,
/// Krylov estimates of the ends otherwise (flagged, with a convergence bit).
fn spectrum_of(a: &SparseMatrix, k: usize) -> (Vec<f64>, bool, Option<bool>) {
    let short = a.nrows().min(a.ncols());
    if short <= DENSE_LIMIT {
        let (_, sigmas, _) = dense::svd(&a.to_dense());
        return (sigmas, false, None);
    }

    let op = NormalEqOperator::new(a);
    let low_cfg = LanczosConfig {
        num_pairs: (k + 1).max(11).min(short),
        target: LanczosTarget::Smallest,
        tol: 1e-10,
        tol_rule: TolRule::NormalEqDynamic,
        max_steps: 1500,
        ..LanczosConfig::default()
    };
    let low = lanczos_unrestarted(&op, None, &low_cfg);
    let high_cfg = LanczosConfig {
        num_pairs: 2,
        target: LanczosTarget::Largest,
        tol: 1e-10,
        tol_rule: TolRule::FixedRelative,
        max_steps: 1500,
        ..LanczosConfig::default()
    };
    let high = lanczos_unrestarted(&op, None, &high_cfg);

    let mut sigmas: Vec<f64> = low
        .values
        .iter()
        .chain(high.values.iter())
        .map(|&theta| theta.max(0.0).sqrt())
        .collect();
    sigmas.sort_by(|x, y| x.partial_cmp(y).unwrap());
    (sigmas, true, Some(low.converged && high.converged))
}

fn analyze_spectrum(
    sigmas: &[f64],
    source: String,
    estimated: bool,
    estimate_converged: Option<bool>,
    k_flag: Option<usize>,
) -> AnalyzeReport {
    let count = sigmas.len();
    let sigma_min = sigmas[0];
    let sigma_max = *sigmas.last().unwrap();

    let (condition, condition_reason) = if sigma_min > 0.0 {
        (Some(sigma_max / sigma_min), None)
    } else {
        (None, Some("the smallest singular value is zero".to_string()))
    };

    let mut ks: Vec<usize> = vec![1, 5, 10];
    if let Some(k) = k_flag {
        ks.push(k);
    }
    ks.sort_unstable();
    ks.dedup();

    let too_short = "spectrum has fewer values than requested targets".to_string();
    let gamma_m: Vec<GapEntry> = ks
        .into_iter()
        .map(|k| {
            if k >= 1 && count >= 2 && k <= count {
                GapEntry {
                    k,
                    value: Some(phsvds::analysis::min_gap_among_targets(sigmas, k)),
                    reason: None,
                }
            } else {
                GapEntry { k, value: None, reason: Some(too_short.clone()) }
            }
        })
        .collect();

    if count < 2 {
        let why = "rate bounds need at least two singular values".to_string();
        return AnalyzeReport {
            schema_version: SCHEMA_VERSION,
            source,
            estimated,
            estimate_converged,
            count,
            sigma_min,
            sigma_max,
            norm2: sigma_max,
            condition,
            condition_reason,
            gamma_m,
            gamma_b: None,
            gamma_b_reason: Some(why.clone()),
            gamma_c: None,
            gamma_c_reason: Some(why.clone()),
            rho: None,
            rho_reason: Some(why.clone()),
            q: None,
            q_reason: Some(why.clone()),
            tau: None,
            tau_reason: Some(why),
        };
    }

    let ratios = phsvds::analysis::gap_ratios_largest(sigmas);
    let (gamma_c, gamma_c_reason) = if ratios.normal.is_finite() {
        (Some(ratios.normal), None)
    } else {
        (None, Some("the squared-gap denominator vanishes".to_string()))
    };
    let rho = phsvds::analysis::rate_bound_augmented(sigmas);
    let normal = phsvds::analysis::rate_bound_normal(sigmas);
    let no_linear_bound =
        "the squared-spectrum gap ratio is 1/4 or more, outside the linear bound's range";
    let (q, q_reason) = match normal.factor {
        Some(q) => (Some(q), None),
        None => (None, Some(no_linear_bound.to_string())),
    };
    let (tau, tau_reason) = match phsvds::analysis::speedup_tau(sigmas) {
        Some(t) => (Some(t), None),
        None => (None, Some(no_linear_bound.to_string())),
    };

    AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        source,
        estimated,
        estimate_converged,
        count,
        sigma_min,
        sigma_max,
        norm2: sigma_max,
        condition,
        condition_reason,
        gamma_m,
        gamma_b: Some(ratios.augmented),
        gamma_b_reason: None,
        gamma_c,
        gamma_c_reason,
        rho: Some(rho),
        rho_reason: None,
        q,
        q_reason,
        tau,
        tau_reason,
    }
}

// ---------------------------------------------------------------------------
// compare

pub fn cmd_compare(args: &CompareArgs) -> Result<u8, String> {
    if args.target != "smallest" {
        return Err(format!("--target only supports \"smallest\", got {:?}", args.target));
    }
    if args.steps == 0 {
        return Err("--steps must be positive".into());
    }
    let seed = resolve_seed(args.seed)?;
    let input = read_matrix(&args.matrix)?;
    // The trace is orientation-invariant, so run everything on the tall
    // orientation directly.
    let a = if input.nrows() >= input.ncols() { input } else { input.transpose() };
    let (m, n) = (a.nrows(), a.ncols());

    let v1 = vec![1.0 / (n as f64).sqrt(); n];
    let mut b1 = vec![0.0; m + n];
    b1[..n].copy_from_slice(&v1);

    let mut rows: Vec<String> = Vec::new();
    let mut push_rows = |method: &str, points: &[(usize, usize, f64)]| {
        for &(step, products, residual) in points {
            if residual.is_finite() {
                rows.push(format!("{method},{step},{products},0,{residual:e}"));
            }
        }
    };

    if !args.restarted {
        let c_op = NormalEqOperator::new(&a);
        let lc = lanczos_unrestarted(
            &c_op,
            Some(&v1),
            &LanczosConfig {
                num_pairs: 1,
                target: LanczosTarget::Smallest,
                tol: args.tol,
                tol_rule: TolRule::NormalEqDynamic,
                max_steps: args.steps,
                seed,
                ..LanczosConfig::default()
            },
        );
        push_rows("lanczos-C", &trace_points(&lc.trace, 2));

        let b_op = AugmentedOperator::new(&a);
        let lb = lanczos_unrestarted(
            &b_op,
            Some(&b1),
            &LanczosConfig {
                num_pairs: 1,
                target: LanczosTarget::FirstAbove(0.0),
                tol: args.tol / std::f64::consts::SQRT_2,
                tol_rule: TolRule::FixedRelative,
                max_steps: args.steps,
                seed,
                ..LanczosConfig::default()
            },
        );
        push_rows("lanczos-B", &trace_points(&lb.trace, 2));

        let lbd = lbd_unrestarted(
            &a,
            Some(&v1),
            &LbdConfig { num_triplets: 1, tol: args.tol, max_steps: args.steps, seed },
        );
        push_rows("lbd", &trace_points(&lbd.trace, 2));
    }

    let (max_basis_c, min_restart_c) = basis_sizes(args.restarted, args.steps, n);
    let c_op = NormalEqOperator::new(&a);
    let hist_c = gdk_history(
        &c_op,
        &v1,
        EigConfig {
            which: Which::SmallestAlgebraic,
            extraction: Extraction::RayleighRitz,
            tol: args.tol,
            tol_rule: TolRule::NormalEqDynamic,
            max_basis: max_basis_c,
            min_restart: min_restart_c,
            max_outer: Some(args.steps),
            stage: Side::NormalEq,
            seed,
            ..EigConfig::default()
        },
    )?;
    push_rows("gdk-C", &history_points(&hist_c));

    let (max_basis_b, min_restart_b) = basis_sizes(args.restarted, args.steps, m + n);
    let b_op = AugmentedOperator::new(&a);
    let hist_b = gdk_history(
        &b_op,
        &b1,
        EigConfig {
            which: Which::ClosestToShifts,
            shifts: vec![0.0],
            extraction: Extraction::Refined,
            monotone_shifts: true,
            mirror_split: Some(n),
            tol: args.tol / std::f64::consts::SQRT_2,
            tol_rule: TolRule::FixedRelative,
            max_basis: max_basis_b,
            min_restart: min_restart_b,
            max_outer: Some(args.steps),
            stage: Side::Augmented,
            seed,
            ..EigConfig::default()
        },
    )?;
    push_rows("gdk-B", &history_points(&hist_b));

    let mut text = String::from("method,step,matvecs,target,residual\n");
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    write_output(&text, args.out_file.as_deref())?;
    Ok(0)
}

/// Restarted runs use the production basis sizes; unrestarted ones get a
/// basis large enough to never restart within the step budget.
fn basis_sizes(restarted: bool, steps: usize, dim: usize) -> (usize, usize) {
    if restarted {
        (35, 21)
    } else {
        let max_basis = (steps + 2).min(dim).max(2);
        let min_restart = (max_basis / 2).max(2).min(max_basis - 1).max(1);
        (max_basis, min_restart)
    }
}

fn gdk_history(
    op: &dyn phsvds::LinearOperator,
    guess: &[f64],
    cfg: EigConfig,
) -> Result<ConvergenceHistory, String> {
    match gd_plus_k_solve(op, None, &[guess.to_vec()], &cfg) {
        Ok(out) => Ok(out.history),
        Err(EigError::BudgetExhausted { partial, .. }) => Ok(partial.history),
        Err(e) => Err(e.to_string()),
    }
}

/// (step, true products with A or its transpose, residual) for a per-step
/// baseline trace whose every step costs `products_per_step` real products.
fn trace_points(trace: &[f64], products_per_step: usize) -> Vec<(usize, usize, f64)> {
    trace
        .iter()
        .enumerate()
        .map(|(j, &r)| (j + 1, (j + 1) * products_per_step, r))
        .collect()
}

/// Same, from a solver history whose matvec counts are in A/Aᵀ pairs.
fn history_points(history: &ConvergenceHistory) -> Vec<(usize, usize, f64)> {
    history
        .entries
        .iter()
        .enumerate()
        .map(|(j, e)| (j + 1, 2 * e.matvecs, e.residual_norm))
        .collect()
}

// ---------------------------------------------------------------------------
// generate

pub fn cmd_generate(args: &GenerateArgs) -> Result<u8, String> {
    let diag: Vec<f64> = match args.kind {
        GenKind::Diag => {
            if args.size == 0 {
                return Err("--size must be positive".into());
            }
            (1..=args.size).map(|i| i as f64).collect()
        }
        GenKind::Table1 => {
            let mut d = vec![1e-14, 1e-12];
            d.extend((1..=4).map(|i| i as f64 * 1e-8));
            d.extend((1..=1000).map(|i| i as f64 * 1e-3));
            d
        }
        GenKind::Fig3 => {
            let mut d: Vec<f64> = (1..=10).map(|i| i as f64).collect();
            d.extend((0..=9990).map(|i| 1000.0 + 100.0 * i as f64));
            d
        }
    };
    let a = SparseMatrix::from_diagonal(&diag);
    mtx::write_matrix_market_file(&a, &args.out)
        .map_err(|e| format!("cannot write {}: {e}", args.out.display()))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// shared plumbing

/// The seed every randomized path uses: the PHSVDS_SEED variable when set,
/// the --seed flag otherwise.
fn resolve_seed(flag: u64) -> Result<u64, String> {
    match std::env::var("PHSVDS_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| format!("PHSVDS_SEED must be an unsigned integer, got {text:?}")),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(format!("PHSVDS_SEED is unreadable: {e}")),
    }
}

fn read_matrix(path: &Path) -> Result<SparseMatrix, String> {
    mtx::read_matrix_market_file(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write_output(text: &str, out_file: Option<&Path>) -> Result<(), String> {
    let mut owned;
    let text = if text.ends_with('\n') {
        text
    } else {
        owned = String::with_capacity(text.len() + 1);
        owned.push_str(text);
        owned.push('\n');
        &owned
    };
    match out_file {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_list_parses_sorted_and_rejects_junk() {
        assert_eq!(parse_sigma_list("1, 0.01 ,0.02").unwrap(), vec![0.01, 0.02, 1.0]);
        assert!(parse_sigma_list("").is_err());
        assert!(parse_sigma_list("1,frog").is_err());
        assert!(parse_sigma_list("1,-2").is_err());
        assert!(parse_sigma_list("1,inf").is_err());
    }

    #[test]
    fn analyze_spectrum_matches_hand_computed_speedup() {
        let report =
            analyze_spectrum(&[0.01, 0.02, 1.0], "sigma-list".into(), false, None, None);
        assert!((report.tau.unwrap() - 1.02124).abs() < 1e-4);
        assert_eq!(report.condition, Some(100.0));
        assert_eq!(report.norm2, 1.0);
        // gamma_m targets beyond the spectrum length are flagged invalid.
        assert!(report.gamma_m.iter().any(|g| g.k == 5 && g.value.is_none()));
    }

    #[test]
    fn single_value_spectrum_reports_reasons_not_panics() {
        let report = analyze_spectrum(&[2.0], "sigma-list".into(), false, None, None);
        assert_eq!(report.count, 1);
        assert!(report.q.is_none() && report.q_reason.is_some());
        assert!(report.tau.is_none());
        assert_eq!(report.condition, Some(1.0));
    }

    #[test]
    fn unrestarted_basis_sizes_fit_small_dims() {
        let (basis, restart) = basis_sizes(false, 100, 3);
        assert!(basis <= 3 && restart < basis && restart >= 1);
        let (basis, restart) = basis_sizes(false, 4, 1000);
        assert_eq!(basis, 6);
        assert!(restart < basis);
        let (basis, restart) = basis_sizes(true, 7, 1000);
        assert_eq!((basis, restart), (35, 21));
    }
}
