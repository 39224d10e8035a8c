//! Command-line front end for the sparse singular-value solvers.
//!
//! Four subcommands: `svds` solves problems read from Matrix Market files
//! and emits a versioned JSON (or CSV) report; `analyze` reports spectrum
//! properties and convergence-rate predictions; `compare` traces the
//! solver family iteration by iteration as CSV for external plotting;
//! `generate` writes the synthetic test matrices used across the test
//! suite.
//!
//! Exit codes: 0 on full convergence, 2 when results are partial (budget
//! exhausted or a triplet finished above tolerance), 1 on usage or input
//! errors.

pub mod commands;
pub mod report;
