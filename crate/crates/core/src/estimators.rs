//! Finite-sample pipeline: data generation, penalized fits, two-step prox and three-step reduced OLS.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::asymptotics::{Method, ModelSpec, RecoveryEstimate};
use crate::error::{Error, Result};
use crate::numerics::{rank, RngStream, RANK_TOL};
use crate::regularizers::{basis_for_pattern, pattern_of, pattern_of_tol, Family, Pattern, PenaltySpec};
use crate::solvers::{prox_penalty, solve_penalized_gram, SolveReport, SolverConfig};

/// Pattern snapping tolerance for finite-sample fits.
pub const FINITE_N_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleRule {
    /// `f_n = sqrt(n) alpha f`.
    SqrtN,
    /// Use the spec's scale as given.
    Fixed,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub beta1: DVector<f64>,
    pub beta2: DVector<f64>,
    pub beta3: Option<DVector<f64>>,
    pub pattern2: Pattern,
    pub recovered: bool,
}

/// Rows of X i.i.d. N(0, C), noise i.i.d. N(0, sigma^2).
pub fn generate_data(model: &ModelSpec, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let p = model.dim();
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.standard_normal();
        }
    }
    let x = z * model.c.sqrt();
    let eps = rng.normal_vector(n) * model.sigma;
    let y = &x * &model.beta0 + eps;
    Ok(Dataset { x, y, seed: rng.seed(), stream: rng.stream() })
}

pub fn fit_stage1(data: &Dataset, spec: &PenaltySpec, rule: ScaleRule, cfg: &SolverConfig) -> Result<SolveReport> {
    let s = match rule {
        ScaleRule::SqrtN => spec.clone().with_alpha(spec.alpha * (data.n() as f64).sqrt())?,
        ScaleRule::Fixed => spec.clone(),
    };
    let h = data.x.transpose() * &data.x;
    let b = data.x.transpose() * &data.y;
    if s.polyhedral_is_zero() && s.quadratic_weight() == 0.0 && rank(&data.x, RANK_TOL) < data.p() {
        return Err(Error::RankDeficient(format!("unpenalized fit needs rank(X) = {}", data.p())));
    }
    solve_penalized_gram(&h, &b, &s, cfg)
}

/// Ordinary least squares.
pub fn ols(data: &Dataset) -> Result<DVector<f64>> {
    let h = data.x.transpose() * &data.x;
    let chol = h.cholesky().ok_or_else(|| Error::RankDeficient(format!("X'X is singular (p = {})", data.p())))?;
    Ok(chol.solve(&(data.x.transpose() * &data.y)))
}

/// `Prox_{n^{-1/2} alpha f}(beta1)`.
pub fn two_step(beta1: &DVector<f64>, spec: &PenaltySpec, alpha: f64, n: usize) -> Result<DVector<f64>> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", alpha)));
    }
    if alpha == 0.0 {
        return Ok(beta1.clone());
    }
    prox_penalty(spec, beta1, alpha / (n as f64).sqrt())
}

/// Reduced OLS on the pattern space, lifted back: `U (X_U' X_U)^{-1} X_U' y`.
pub fn three_step(data: &Dataset, pattern: &Pattern, spec: &PenaltySpec) -> Result<DVector<f64>> {
    let u = basis_for_pattern(spec, pattern)?;
    let um = u.matrix();
    let k = um.ncols();
    if k == 0 {
        return Ok(DVector::zeros(data.p()));
    }
    let xm = &data.x * um;
    if rank(&xm, RANK_TOL) < k {
        return Err(Error::RankDeficient(format!("reduced design X U has rank below the pattern dimension {}", k)));
    }
    let g = xm.transpose() * &xm;
    let chol = g.cholesky().ok_or_else(|| Error::RankDeficient(format!("reduced Gram of dimension {} is singular", k)))?;
    Ok(um * chol.solve(&(xm.transpose() * &data.y)))
}

pub fn snapped_pattern(spec: &PenaltySpec, beta: &DVector<f64>) -> Result<Pattern> {
    let tol = match &spec.family {
        Family::GeneralizedLasso { a, .. } => FINITE_N_TOL * (a * beta).amax().max(1.0),
        _ => FINITE_N_TOL * beta.amax().max(1.0),
    };
    pattern_of_tol(spec, beta, tol)
}

/// Stage 1 fit, stage 2 prox, stage 3 reduced OLS on the stage-2 pattern.
pub fn pipeline(
    data: &Dataset,
    stage1: &PenaltySpec,
    rule: ScaleRule,
    stage2: &PenaltySpec,
    alpha2: f64,
    truth: &Pattern,
    cfg: &SolverConfig,
) -> Result<PipelineResult> {
    let beta1 = fit_stage1(data, stage1, rule, cfg)?.solution;
    let beta2 = two_step(&beta1, stage2, alpha2, data.n())?;
    let pattern2 = snapped_pattern(stage2, &beta2)?;
    let beta3 = three_step(data, &pattern2, stage2).ok();
    let recovered = pattern2 == *truth;
    Ok(PipelineResult { beta1, beta2, beta3, pattern2, recovered })
}

/// Fraction of replicates with `pattern(beta_hat_n) = pattern(beta0)` for each n.
pub fn empirical_recovery_rate(
    model: &ModelSpec,
    spec: &PenaltySpec,
    n_grid: &[usize],
    alpha: f64,
    reps: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<(usize, RecoveryEstimate)>> {
    if n_grid.is_empty() || reps == 0 {
        return Err(Error::InvalidArgument("n grid and reps must be nonempty".into()));
    }
    let truth = pattern_of(spec, &model.beta0)?;
    let s = spec.clone().with_alpha(spec.alpha * alpha)?;
    n_grid
        .iter()
        .map(|&n| {
            let out: Result<Vec<(bool, bool)>> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let mut rng = RngStream::new(seed, r as u64);
                    let data = generate_data(model, n, &mut rng)?;
                    let rep = fit_stage1(&data, &s, ScaleRule::SqrtN, cfg)?;
                    Ok((snapped_pattern(spec, &rep.solution)? == truth, rep.converged))
                })
                .collect();
            let out = out?;
            let hits = out.iter().filter(|o| o.0).count();
            let mut est = RecoveryEstimate::from_count(hits, reps, seed, Method::FiniteN);
            est.nonconverged = out.iter().filter(|o| !o.1).count();
            Ok((n, est))
        })
        .collect()
}

/// Two-step recovery rate at sample size n with an OLS first stage.
pub fn two_step_recovery_rate(model: &ModelSpec, spec: &PenaltySpec, n: usize, alpha: f64, reps: usize, seed: u64) -> Result<RecoveryEstimate> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    let truth = pattern_of(spec, &model.beta0)?;
    let hits: Result<Vec<bool>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r as u64);
            let data = generate_data(model, n, &mut rng)?;
            let b1 = ols(&data)?;
            let b2 = two_step(&b1, spec, alpha, n)?;
            Ok(snapped_pattern(spec, &b2)? == truth)
        })
        .collect();
    Ok(RecoveryEstimate::from_count(hits?.into_iter().filter(|h| *h).count(), reps, seed, Method::FiniteN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SpdMatrix;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn noiseless_data_and_three_step() {
        let m = ModelSpec::new(v(&[2.0, 2.0, 0.0, -1.0]), SpdMatrix::equicorrelated(4, 0.3).unwrap(), 0.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let d = generate_data(&m, 30, &mut rng).unwrap();
        assert_relative_eq!(d.y, &d.x * &m.beta0, epsilon = 1e-12);
        let s = PenaltySpec::slope(vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        let truth = pattern_of(&s, &m.beta0).unwrap();
        assert_relative_eq!(three_step(&d, &truth, &s).unwrap(), m.beta0, epsilon = 1e-10);
    }

    #[test]
    fn two_step_zero_alpha_is_identity() {
        let s = PenaltySpec::lasso(1.0).unwrap();
        let b = v(&[0.3, -0.1]);
        assert_eq!(two_step(&b, &s, 0.0, 100).unwrap(), b);
    }

    #[test]
    fn ols_stage_matches_alpha_zero() {
        let m = ModelSpec::new(v(&[1.0, 0.0]), SpdMatrix::identity(2), 1.0).unwrap();
        let d = generate_data(&m, 50, &mut RngStream::new(1, 2)).unwrap();
        let s = PenaltySpec::lasso(1.0).unwrap().with_alpha(0.0).unwrap();
        let f = fit_stage1(&d, &s, ScaleRule::SqrtN, &SolverConfig::default()).unwrap();
        assert_relative_eq!(f.solution, ols(&d).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn rank_deficient_unpenalized_fit_fails() {
        let m = ModelSpec::new(v(&[1.0, 0.0, 1.0]), SpdMatrix::identity(3), 1.0).unwrap();
        let d = generate_data(&m, 2, &mut RngStream::new(1, 2)).unwrap();
        let s = PenaltySpec::lasso(1.0).unwrap().with_alpha(0.0).unwrap();
        assert!(matches!(fit_stage1(&d, &s, ScaleRule::Fixed, &SolverConfig::default()), Err(Error::RankDeficient(_))));
    }
}
