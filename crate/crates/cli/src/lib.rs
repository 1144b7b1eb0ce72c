//! Config-driven experiment runner for pattern-recovery simulations.

pub mod check;
pub mod config;
pub mod output;
pub mod runner;
pub mod validate;

/// Fraction of non-converged replicates above which a run exits with code 3.
pub const MAX_NONCONVERGED: f64 = 1e-3;
