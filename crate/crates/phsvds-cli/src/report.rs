//! Machine-readable reports.
//!
//! The JSON schema is versioned and every field round-trips losslessly:
//! a report can be parsed back into the same structures and re-serialized
//! without changing a single value. Floats never hold NaN or infinities —
//! quantities that can degenerate (condition numbers, rate bounds) are
//! optional fields paired with a reason string instead.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// The flag values a `svds` run resolved to, after defaults and the
/// `PHSVDS_SEED` override, so a report is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub matrix: String,
    pub k: usize,
    pub which: String,
    pub tol: f64,
    pub stage2: String,
    pub precond: String,
    pub block: usize,
    pub max_basis: usize,
    pub min_restart: usize,
    pub dynamic: bool,
    pub random_guess: bool,
    pub shift: f64,
    pub max_matvecs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixInfo {
    pub nrows: usize,
    pub ncols: usize,
    pub nnz: usize,
}

/// One computed triplet with its residual norms recomputed from scratch
/// at report time: `r_u = Aᵀu − σv`, `r_v = Av − σu`, and the combined
/// norm `√(‖r_u‖² + ‖r_v‖²)` that the tolerance is checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletReport {
    pub index: usize,
    pub sigma: f64,
    pub r_u_norm: f64,
    pub r_v_norm: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub floor_limited: bool,
    pub synthetic_partner: bool,
}

/// One convergence-history row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub matvecs: usize,
    pub side: String,
    pub target: usize,
    pub residual: f64,
    pub locked: bool,
    pub note: Option<String>,
}

/// One decision of the dynamic switching loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRow {
    pub chose: String,
    pub rate_c: f64,
    pub rate_b: f64,
    pub max_iter: usize,
    pub num_converged: usize,
    pub num_switch: usize,
}

/// Complete record of one `svds` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub matrix: MatrixInfo,
    pub seed: u64,
    pub a_norm_est: f64,
    pub stage2_used: bool,
    pub matvecs: usize,
    pub wall_seconds: f64,
    pub full_convergence: bool,
    pub triplets: Vec<TripletReport>,
    pub history: Vec<TraceRow>,
    pub switches: Vec<SwitchRow>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Result table as CSV, one row per triplet.
    pub fn triplets_csv(&self) -> String {
        let mut out = String::from(
            "index,sigma,r_u_norm,r_v_norm,residual_norm,converged,floor_limited,synthetic_partner\n",
        );
        for t in &self.triplets {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                t.index,
                t.sigma,
                t.r_u_norm,
                t.r_v_norm,
                t.residual_norm,
                t.converged,
                t.floor_limited,
                t.synthetic_partner
            ));
        }
        out
    }
}

/// A gap statistic for the `k` smallest singular values, or the reason it
/// could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub k: usize,
    pub value: Option<f64>,
    pub reason: Option<String>,
}

/// Spectrum properties and rate predictions emitted by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub source: String,
    /// True when the spectrum is a partial Krylov estimate rather than a
    /// dense decomposition (matrices too large for the dense oracle).
    pub estimated: bool,
    /// For estimated spectra: whether the estimation runs converged.
    pub estimate_converged: Option<bool>,
    /// Number of singular values the statistics were computed from.
    pub count: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Largest singular value (the matrix 2-norm).
    pub norm2: f64,
    /// `σ_max/σ_min`; absent (with reason) for singular matrices.
    pub condition: Option<f64>,
    pub condition_reason: Option<String>,
    /// Smallest absolute gap among the k smallest values, for each k.
    pub gamma_m: Vec<GapEntry>,
    /// Relative gap of the largest value on the augmented matrix; absent
    /// when the spectrum is too short.
    pub gamma_b: Option<f64>,
    pub gamma_b_reason: Option<String>,
    /// Relative gap of the largest value on the normal equations; absent
    /// when its denominator degenerates.
    pub gamma_c: Option<f64>,
    pub gamma_c_reason: Option<String>,
    /// Contraction bound for the smallest value on the augmented matrix;
    /// absent when the spectrum is too short.
    pub rho: Option<f64>,
    pub rho_reason: Option<String>,
    /// Linear contraction bound on the normal equations; absent when the
    /// squared-spectrum gap ratio is too large for the linear model.
    pub q: Option<f64>,
    pub q_reason: Option<String>,
    /// Predicted per-iteration speedup of the normal equations, `rho/q`.
    pub tau: Option<f64>,
    pub tau_reason: Option<String>,
}

impl AnalyzeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            config: ConfigEcho {
                matrix: "m.mtx".into(),
                k: 2,
                which: "smallest".into(),
                tol: 1e-15,
                stage2: "gdk".into(),
                precond: "none".into(),
                block: 2,
                max_basis: 35,
                min_restart: 21,
                dynamic: false,
                random_guess: false,
                shift: 0.0,
                max_matvecs: 1_000_000,
            },
            matrix: MatrixInfo { nrows: 1006, ncols: 1006, nnz: 1006 },
            seed: 42,
            a_norm_est: 1.0,
            stage2_used: true,
            matvecs: 12345,
            wall_seconds: 0.125_000_000_000_000_01,
            full_convergence: true,
            triplets: vec![TripletReport {
                index: 0,
                sigma: 9.952_750_930_151_887e-15,
                r_u_norm: 4.9e-16,
                r_v_norm: 9.8e-16,
                residual_norm: 1.095_716_752_415_201_4e-15,
                converged: true,
                floor_limited: true,
                synthetic_partner: false,
            }],
            history: vec![TraceRow {
                matvecs: 7,
                side: "C".into(),
                target: 0,
                residual: 1e-300,
                locked: false,
                note: Some("random restart".into()),
            }],
            switches: vec![SwitchRow {
                chose: "B".into(),
                rate_c: 0.999_999_999_999_999_9,
                rate_b: 0.1,
                max_iter: 0,
                num_converged: 1,
                num_switch: 3,
            }],
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let report = sample();
        let json = report.to_json();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn csv_has_header_and_one_row_per_triplet() {
        let csv = sample().triplets_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("index,sigma"));
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn analyze_report_round_trips_with_null_fields() {
        let report = AnalyzeReport {
            schema_version: SCHEMA_VERSION,
            source: "sigma-list".into(),
            estimated: false,
            estimate_converged: None,
            count: 3,
            sigma_min: 0.01,
            sigma_max: 1.0,
            norm2: 1.0,
            condition: Some(100.0),
            condition_reason: None,
            gamma_m: vec![GapEntry { k: 1, value: Some(0.01), reason: None }],
            gamma_b: Some(0.96),
            gamma_b_reason: None,
            gamma_c: None,
            gamma_c_reason: Some("degenerate denominator".into()),
            rho: Some(0.985857),
            rho_reason: None,
            q: None,
            q_reason: Some("squared-spectrum gap ratio is 1/4 or more".into()),
            tau: None,
            tau_reason: Some("squared-spectrum gap ratio is 1/4 or more".into()),
        };
        let json = report.to_json();
        let back: AnalyzeReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
