//! Hybrid two-stage computation of extreme singular triplets of large sparse
//! matrices.
//!
//! The solver runs a Davidson-type eigensolver on the normal equations
//! `C = AᵀA` until the squared conditioning of `C` caps the attainable
//! accuracy, then resolves the remaining digits on the augmented matrix
//! `B = [0 Aᵀ; A 0]` with refined extraction, seeded by the first stage's
//! values and vectors.  A dynamic variant probes both matrices and picks the
//! faster one at run time.
//!
//! The crate is self-contained: sparse storage, Matrix Market I/O, the dense
//! kernels used on projected subproblems (Jacobi eigensolver, one-sided
//! Jacobi SVD, Gram-Schmidt QR, pivoted LU), the GD+k / JDQMR eigensolver,
//! unrestarted Lanczos and Lanczos bidiagonalization baselines, and gap-based
//! convergence-rate bounds all live here.

pub mod analysis;
pub mod baselines;
pub mod dense;
pub mod eigensolver;
pub mod history;
pub mod mtx;
pub mod operators;
pub mod sparse;
pub mod svd;

mod vecops;

pub use baselines::{
    lanczos_unrestarted, lbd_unrestarted, LanczosConfig, LanczosOutcome, LanczosTarget, LbdConfig,
    LbdOutcome,
};
pub use dense::DenseMatrix;
pub use eigensolver::{gd_plus_k_solve, gd_plus_k_solve_hooked, EigConfig, EigOutcome};
pub use history::{ConvergenceHistory, HistoryEntry, Side, SwitchDecision};
pub use operators::{LinearOperator, Preconditioner};
pub use sparse::SparseMatrix;
pub use svd::{
    dynamic_switch_solve, dynamic_switch_solve_with, phsvds_solve, phsvds_solve_with,
    shift_invert_svd, ResidualBundle, SingularTriplet, Stage2Method, SvdConfig, SvdError,
    SvdOutcome, SvdWhich,
};

/// Double-precision unit roundoff used in all dynamic tolerance floors.
pub const EPS: f64 = 2.22e-16;
