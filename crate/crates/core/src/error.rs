use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (eigenvalue ratio {0:e})")]
    NotPositiveDefinite(f64),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("pattern operations unsupported: {0}")]
    UnsupportedPattern(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is off the affine hull (distance {0:e})")]
    OffAffineHull(f64),
    #[error("vertex enumeration refused: {count} vertices exceed the limit {max}")]
    TooManyVertices { count: u128, max: usize },
    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("estimators disagree on {fraction:.4} of replicates")]
    CriterionDisagreement { fraction: f64 },
    #[error("analytic center dependence: mu moved by {0:e}")]
    CenterDependence(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
