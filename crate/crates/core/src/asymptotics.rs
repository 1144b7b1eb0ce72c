//! Limiting error law: sampling û, recovery probabilities (direct and closed form),
//! irrepresentability, attainability, RMSE curves and reduced-OLS baselines.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{weighted_projection, Basis, RngStream, SpdMatrix};
use crate::polytope::{contains, contains_ri, subdifferential_at, subdifferential_for_pattern, SubdifferentialDesc};
use crate::regularizers::{
    basis_for_pattern, limiting_pattern, pattern_basis, pattern_of, ClusterPartition, Family, Pattern, PatternKind,
    PenaltySpec,
};
use crate::solvers::{solve_v_min, SolverConfig};

/// Subspace criterion tolerance for û ∈ ⟨U⟩.
pub const SUBSPACE_TOL: f64 = 1e-6;
/// Largest tolerated fraction of replicates where the two recovery criteria disagree.
pub const MAX_DISAGREEMENT: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub beta0: DVector<f64>,
    pub c: SpdMatrix,
    pub sigma: f64,
}

impl ModelSpec {
    pub fn new(beta0: DVector<f64>, c: SpdMatrix, sigma: f64) -> Result<Self> {
        if beta0.len() != c.dim() {
            return Err(Error::Dimension(format!("beta0 has length {}, C is {}x{}", beta0.len(), c.dim(), c.dim())));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {}", sigma)));
        }
        Ok(Self { beta0, c, sigma })
    }
    pub fn dim(&self) -> usize {
        self.beta0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    ClosedForm,
    FiniteN,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::ClosedForm => "closed_form",
            Method::FiniteN => "finite_n",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryEstimate {
    pub p_hat: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
    pub method: Method,
    pub nonconverged: usize,
    pub disagreements: usize,
}

impl RecoveryEstimate {
    pub fn from_count(hits: usize, reps: usize, seed: u64, method: Method) -> Self {
        let p = hits as f64 / reps as f64;
        Self { p_hat: p, se: (p * (1.0 - p) / reps as f64).sqrt(), reps, seed, method, nonconverged: 0, disagreements: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrrepReport {
    pub holds: bool,
    pub margin: f64,
    pub mu: DVector<f64>,
    pub boundary_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsePoint {
    pub alpha: f64,
    pub rmse: f64,
    pub se: f64,
    pub recovery: RecoveryEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOls {
    /// Covariance in pattern coordinates.
    pub covariance: DMatrix<f64>,
    /// RMSE in full coordinates.
    pub rmse: f64,
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    Ok(())
}

/// One draw of û with `W ~ N(0, sigma^2 C)`.
pub fn sample_asymptotic_error(model: &ModelSpec, spec: &PenaltySpec, rng: &mut RngStream, cfg: &SolverConfig) -> Result<DVector<f64>> {
    let z = rng.normal_vector(model.dim());
    let w = model.c.sqrt() * z * model.sigma;
    let rep = solve_v_min(&model.c, &w, spec, &model.beta0, cfg)?;
    if !rep.converged {
        return Err(Error::NotConverged { iterations: rep.iterations, residual: rep.kkt_residual });
    }
    Ok(rep.solution)
}

struct Replicate {
    recovered: bool,
    disagree: bool,
    converged: bool,
    sq_norm: f64,
}

/// Shared engine: minimize `1/2 u'Hu - u'W + f'(beta0; u)` with `W = factor z`.
fn direct_replicates(
    beta0: &DVector<f64>,
    h: &SpdMatrix,
    factor: &DMatrix<f64>,
    spec: &PenaltySpec,
    reps: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<Replicate>> {
    let truth = pattern_of(spec, beta0)?;
    let proj = basis_for_pattern(spec, &truth)?.projector();
    let p = beta0.len();
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r as u64);
            let w = factor * rng.normal_vector(factor.ncols());
            let rep = solve_v_min(h, &w, spec, beta0, cfg)?;
            let u = rep.solution;
            let resid = (DMatrix::identity(p, p) - &proj) * &u;
            let in_space = resid.norm() <= SUBSPACE_TOL * u.norm().max(1.0);
            let snapped = limiting_pattern(spec, beta0, &u)? == truth;
            Ok(Replicate { recovered: in_space, disagree: in_space != snapped, converged: rep.converged, sq_norm: u.norm_squared() })
        })
        .collect()
}

fn summarize(reps: &[Replicate], seed: u64) -> Result<RecoveryEstimate> {
    let n = reps.len();
    let hits = reps.iter().filter(|r| r.recovered).count();
    let dis = reps.iter().filter(|r| r.disagree).count();
    let mut est = RecoveryEstimate::from_count(hits, n, seed, Method::Direct);
    est.nonconverged = reps.iter().filter(|r| !r.converged).count();
    est.disagreements = dis;
    if dis as f64 > MAX_DISAGREEMENT * n as f64 {
        return Err(Error::CriterionDisagreement { fraction: dis as f64 / n as f64 });
    }
    Ok(est)
}

pub fn recovery_probability_direct(model: &ModelSpec, spec: &PenaltySpec, reps: usize, seed: u64, cfg: &SolverConfig) -> Result<RecoveryEstimate> {
    check_reps(reps)?;
    let factor = model.c.sqrt() * model.sigma;
    let r = direct_replicates(&model.beta0, &model.c, &factor, spec, reps, seed, cfg)?;
    summarize(&r, seed)
}

/// Ingredients of the closed-form statistic ζ = μ + C^{1/2}(I − P)C^{−1/2} W.
pub struct ZetaLaw {
    pub desc: SubdifferentialDesc,
    pub mu: DVector<f64>,
    /// ζ − μ = noise_factor · z with z standard normal.
    pub noise_factor: DMatrix<f64>,
}

fn zeta_law(beta0: &DVector<f64>, h: &SpdMatrix, w_factor: &DMatrix<f64>, spec: &PenaltySpec) -> Result<ZetaLaw> {
    let desc = subdifferential_at(spec, beta0)?;
    let u = pattern_basis(spec, beta0)?;
    let wp = weighted_projection(h, &u)?;
    let mu = wp.mu_map(&desc.center());
    let mu2 = wp.mu_map(&desc.some_vertex());
    let gap = (&mu - &mu2).norm();
    if gap > 1e-9 * (1.0 + mu.norm()) {
        return Err(Error::CenterDependence(gap));
    }
    let noise_factor = wp.residual_map() * w_factor;
    Ok(ZetaLaw { desc, mu, noise_factor })
}

/// The closed-form law for the model's own covariance.
pub fn closed_form_law(model: &ModelSpec, spec: &PenaltySpec) -> Result<ZetaLaw> {
    zeta_law(&model.beta0, &model.c, &(model.c.sqrt() * model.sigma), spec)
}

fn closed_count(law: &ZetaLaw, reps: usize, seed: u64) -> Result<usize> {
    let hits: Result<Vec<bool>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r as u64);
            let z = rng.normal_vector(law.noise_factor.ncols());
            let zeta = &law.mu + &law.noise_factor * z;
            contains(&law.desc, &zeta, None)
        })
        .collect();
    Ok(hits?.into_iter().filter(|h| *h).count())
}

pub fn recovery_probability_closed_form(model: &ModelSpec, spec: &PenaltySpec, reps: usize, seed: u64) -> Result<RecoveryEstimate> {
    check_reps(reps)?;
    let law = closed_form_law(model, spec)?;
    Ok(RecoveryEstimate::from_count(closed_count(&law, reps, seed)?, reps, seed, Method::ClosedForm))
}

/// Limit of the two-step estimator started from OLS: the V-problem with `C = I`
/// and `W ~ N(0, sigma^2 C^{-1})`, estimated directly.
pub fn two_step_limit_direct(model: &ModelSpec, spec: &PenaltySpec, reps: usize, seed: u64, cfg: &SolverConfig) -> Result<RecoveryEstimate> {
    check_reps(reps)?;
    let id = SpdMatrix::identity(model.dim());
    let factor = model.c.inv_sqrt() * model.sigma;
    let r = direct_replicates(&model.beta0, &id, &factor, spec, reps, seed, cfg)?;
    summarize(&r, seed)
}

/// Same limit through the closed-form statistic with `C = I` in the projection.
pub fn two_step_limit_closed_form(model: &ModelSpec, spec: &PenaltySpec, reps: usize, seed: u64) -> Result<RecoveryEstimate> {
    check_reps(reps)?;
    let id = SpdMatrix::identity(model.dim());
    let law = zeta_law(&model.beta0, &id, &(model.c.inv_sqrt() * model.sigma), spec)?;
    Ok(RecoveryEstimate::from_count(closed_count(&law, reps, seed)?, reps, seed, Method::ClosedForm))
}

pub fn irrepresentability_check(model: &ModelSpec, spec: &PenaltySpec) -> Result<IrrepReport> {
    let law = closed_form_law(model, spec)?;
    let ri = contains_ri(&law.desc, &law.mu)?;
    let boundary_note = if ri.inside {
        None
    } else if ri.margin == 0.0 {
        Some("mu lies on the relative boundary of the subdifferential".to_string())
    } else {
        Some("mu lies outside the subdifferential".to_string())
    };
    Ok(IrrepReport { holds: ri.inside, margin: ri.margin, mu: law.mu, boundary_note })
}

/// A point whose pattern is `pat`.
pub fn pattern_representative(spec: &PenaltySpec, pat: &Pattern) -> Result<DVector<f64>> {
    let p = pat.dim;
    let x = match (&spec.family, pat.kind) {
        (Family::Lasso { .. }, PatternKind::Sign) | (Family::Slope { .. }, PatternKind::RankSign) => {
            DVector::from_iterator(p, pat.code.iter().map(|c| *c as f64))
        }
        (Family::Ridge { .. }, PatternKind::Trivial) => DVector::zeros(p),
        (Family::GeneralizedLasso { a, .. }, PatternKind::GeneralizedSign) => {
            let basis = basis_for_pattern(spec, pat)?;
            let n = basis.matrix();
            let rows: Vec<usize> = (0..a.nrows()).filter(|&i| pat.code[i] != 0).collect();
            if rows.is_empty() {
                DVector::zeros(p)
            } else {
                let m = a.select_rows(rows.iter()) * n;
                let s = DVector::from_iterator(rows.len(), rows.iter().map(|&i| pat.code[i] as f64));
                // least squares toward the sign targets, then perceptron corrections
                let svd = m.clone().svd(true, true);
                let mut theta = svd.solve(&s, 1e-12).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for _ in 0..10_000 {
                    let val = &m * &theta;
                    let bad = (0..rows.len()).find(|&k| s[k] * val[k] < 0.5);
                    match bad {
                        None => break,
                        Some(k) => theta += m.row(k).transpose() * s[k],
                    }
                }
                let x = n * theta;
                x
            }
        }
        _ => return Err(Error::InvalidArgument("pattern kind does not match the penalty family".into())),
    };
    if pattern_of(spec, &x)? != *pat {
        return Err(Error::InvalidArgument(format!("no representative found for pattern {}", pat)));
    }
    Ok(x)
}

pub fn attainability_check(spec: &PenaltySpec, beta0: &DVector<f64>, candidate: &Pattern) -> Result<bool> {
    let rep = pattern_representative(spec, candidate)?;
    let q = limiting_pattern(spec, beta0, &rep)?;
    let dq = subdifferential_for_pattern(spec, &q)?.dimension();
    let dp = subdifferential_for_pattern(spec, candidate)?.dimension();
    Ok(dq == dp)
}

fn jackknife_rmse(sq: &[f64]) -> (f64, f64) {
    let n = sq.len() as f64;
    let total: f64 = sq.iter().sum();
    let rmse = (total / n).sqrt();
    if sq.len() < 2 {
        return (rmse, f64::NAN);
    }
    let loo: Vec<f64> = sq.iter().map(|s| ((total - s) / (n - 1.0)).max(0.0).sqrt()).collect();
    let mean = loo.iter().sum::<f64>() / n;
    let var = loo.iter().map(|t| (t - mean).powi(2)).sum::<f64>() * (n - 1.0) / n;
    (rmse, var.sqrt())
}

/// RMSE of û along a grid of penalty scales (each α multiplies the spec's own scale).
pub fn rmse_curve(model: &ModelSpec, spec: &PenaltySpec, alphas: &[f64], reps: usize, seed: u64, cfg: &SolverConfig) -> Result<Vec<RmsePoint>> {
    check_reps(reps)?;
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    let factor = model.c.sqrt() * model.sigma;
    alphas
        .iter()
        .map(|&a| {
            let s = spec.clone().with_alpha(spec.alpha * a)?;
            let r = direct_replicates(&model.beta0, &model.c, &factor, &s, reps, seed, cfg)?;
            let sq: Vec<f64> = r.iter().map(|x| x.sq_norm).collect();
            let (rmse, se) = jackknife_rmse(&sq);
            Ok(RmsePoint { alpha: a, rmse, se, recovery: summarize(&r, seed)? })
        })
        .collect()
}

pub fn reduced_ols_baseline(model: &ModelSpec, spec: &PenaltySpec) -> Result<ReducedOls> {
    let u: Basis = pattern_basis(spec, &model.beta0)?;
    let um = u.matrix();
    let g = um.transpose() * model.c.matrix() * um;
    let ginv = g.try_inverse().ok_or_else(|| Error::RankDeficient("U'CU is singular".into()))?;
    let s2 = model.sigma * model.sigma;
    let rmse = model.sigma * (um * &ginv * um.transpose()).trace().max(0.0).sqrt();
    Ok(ReducedOls { covariance: ginv * s2, rmse })
}

/// Cluster partition of β⁰ for SLOPE-type reporting.
pub fn clusters_of(beta0: &DVector<f64>, spec: &PenaltySpec) -> Result<ClusterPartition> {
    Ok(ClusterPartition::from_code(&pattern_of(spec, beta0)?.code))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn slope_model(rho: f64) -> ModelSpec {
        ModelSpec::new(v(&[1.0, 0.0]), SpdMatrix::equicorrelated(2, rho).unwrap(), 0.2).unwrap()
    }

    #[test]
    fn irrep_slope_examples() {
        let s = PenaltySpec::slope(vec![3.0, 2.0]).unwrap();
        let r = irrepresentability_check(&slope_model(0.5), &s).unwrap();
        assert!(r.holds);
        assert_relative_eq!(r.mu, v(&[3.0, 1.5]), epsilon = 1e-12);
        assert!(!irrepresentability_check(&slope_model(0.7), &s).unwrap().holds);
    }

    #[test]
    fn irrep_fused_equal_weights_boundary() {
        let f = PenaltySpec::fused_lasso(&[1.0, 1.0, 1.0], None, 1.0).unwrap();
        let m = ModelSpec::new(v(&[1.0, 2.0, 2.0, 3.0]), SpdMatrix::identity(4), 0.2).unwrap();
        let r = irrepresentability_check(&m, &f).unwrap();
        assert!(!r.holds);
        assert_eq!(r.margin, 0.0);
        let g = PenaltySpec::fused_lasso(&[1.0, 2.0, 1.0], None, 1.0).unwrap();
        assert!(irrepresentability_check(&m, &g).unwrap().holds);
    }

    #[test]
    fn attainability_examples() {
        let l = PenaltySpec::lasso(1.0).unwrap();
        let b0 = v(&[1.0, 0.0]);
        let pat = |c: Vec<i32>| Pattern { kind: PatternKind::Sign, code: c, dim: 2 };
        assert!(!attainability_check(&l, &b0, &pat(vec![0, 1])).unwrap());
        assert!(attainability_check(&l, &b0, &pat(vec![1, -1])).unwrap());
        assert!(attainability_check(&l, &b0, &pat(vec![1, 0])).unwrap());
    }

    #[test]
    fn reduced_ols_identity_basis() {
        let c = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let m = ModelSpec::new(v(&[1.0, 2.0]), c.clone(), 0.5).unwrap();
        let r = reduced_ols_baseline(&m, &PenaltySpec::lasso(1.0).unwrap()).unwrap();
        assert_relative_eq!(r.covariance, c.inverse() * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn direct_and_closed_agree_per_replicate() {
        let s = PenaltySpec::slope(vec![3.0, 2.0]).unwrap().with_alpha(2.0).unwrap();
        let m = slope_model(0.66);
        let cfg = SolverConfig::default();
        let d = recovery_probability_direct(&m, &s, 400, 11, &cfg).unwrap();
        let c = recovery_probability_closed_form(&m, &s, 400, 11).unwrap();
        assert_eq!(d.p_hat, c.p_hat);
        assert_eq!(d.nonconverged, 0);
    }

    #[test]
    fn alpha_zero_never_recovers_sparse() {
        let s = PenaltySpec::lasso(1.0).unwrap().with_alpha(0.0).unwrap();
        let d = recovery_probability_direct(&slope_model(0.3), &s, 200, 1, &SolverConfig::default()).unwrap();
        assert_eq!(d.p_hat, 0.0);
    }
}
