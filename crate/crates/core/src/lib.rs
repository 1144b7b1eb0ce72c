//! Pattern recovery for polyhedral penalties: asymptotic error laws, recovery probabilities,
//! proximal solvers and the subdifferential geometry behind them.

pub mod error;
pub mod numerics;
pub mod polytope;
pub mod regularizers;
pub mod solvers;
pub mod asymptotics;
pub mod estimators;
pub mod oracle;

pub use error::{Error, Result};
