//! Penalty families, pattern codes, limiting patterns, pattern spaces and directional derivatives.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numerics::{null_space, Basis, RANK_TOL};

/// Relative snapping tolerance for pattern codes.
pub const PATTERN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Lasso { lambda: f64 },
    /// `lambda * ||A x||_1`; row weights live inside `a`.
    GeneralizedLasso { a: DMatrix<f64>, lambda: f64 },
    Slope { lambda: DVector<f64> },
    /// `lambda/2 * ||x||^2`.
    Ridge { lambda: f64 },
}

/// Penalty `alpha * (f(x) + smooth/2 * ||x||^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub family: Family,
    pub smooth_ridge: Option<f64>,
    pub alpha: f64,
}

impl PenaltySpec {
    pub fn new(family: Family) -> Result<Self> {
        let s = Self { family, smooth_ridge: None, alpha: 1.0 };
        s.validate()?;
        Ok(s)
    }
    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::new(Family::Lasso { lambda })
    }
    pub fn slope(lambda: Vec<f64>) -> Result<Self> {
        Self::new(Family::Slope { lambda: DVector::from_vec(lambda) })
    }
    pub fn ridge(lambda: f64) -> Result<Self> {
        Self::new(Family::Ridge { lambda })
    }
    pub fn generalized_lasso(a: DMatrix<f64>, lambda: f64) -> Result<Self> {
        Self::new(Family::GeneralizedLasso { a, lambda })
    }
    /// Weighted fused lasso: rows `w_i (e_i - e_{i+1})`, plus `a e_i` rows when a sparsity weight is given.
    pub fn fused_lasso(weights: &[f64], sparsity: Option<f64>, lambda: f64) -> Result<Self> {
        Self::generalized_lasso(fused_matrix(weights, sparsity), lambda)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }
    pub fn with_smooth_ridge(mut self, lambda: f64) -> Result<Self> {
        self.smooth_ridge = Some(lambda);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPenalty(m));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("scale alpha must be finite and >= 0, got {}", self.alpha));
        }
        if let Some(r) = self.smooth_ridge {
            if !(r >= 0.0) || !r.is_finite() {
                return bad(format!("smooth ridge weight must be >= 0, got {}", r));
            }
        }
        match &self.family {
            Family::Lasso { lambda } | Family::Ridge { lambda } => {
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return bad(format!("lambda must be finite and >= 0, got {}", lambda));
                }
            }
            Family::GeneralizedLasso { a, lambda } => {
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return bad(format!("lambda must be finite and >= 0, got {}", lambda));
                }
                if a.nrows() == 0 || a.ncols() == 0 {
                    return bad("penalty matrix A is empty".into());
                }
                for (i, row) in a.row_iter().enumerate() {
                    if row.amax() == 0.0 {
                        return bad(format!("row {} of A is zero", i));
                    }
                }
            }
            Family::Slope { lambda } => {
                if lambda.is_empty() {
                    return bad("SLOPE weights are empty".into());
                }
                if lambda.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                    return bad("SLOPE weights must be finite and >= 0".into());
                }
                if lambda.as_slice().windows(2).any(|w| w[1] > w[0]) {
                    return bad("SLOPE weights must be nonincreasing".into());
                }
            }
        }
        Ok(())
    }

    /// Fixed dimension, if the family determines one.
    pub fn dim(&self) -> Option<usize> {
        match &self.family {
            Family::GeneralizedLasso { a, .. } => Some(a.ncols()),
            Family::Slope { lambda } => Some(lambda.len()),
            _ => None,
        }
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != p => Err(Error::Dimension(format!("penalty is defined on R^{} but vector has length {}", d, p))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Lasso { .. } => "lasso",
            Family::GeneralizedLasso { .. } => "generalized_lasso",
            Family::Slope { .. } => "slope",
            Family::Ridge { .. } => "ridge",
        }
    }

    /// Total weight of the quadratic part, including the scale.
    pub fn quadratic_weight(&self) -> f64 {
        let fam = match self.family {
            Family::Ridge { lambda } => lambda,
            _ => 0.0,
        };
        self.alpha * (fam + self.smooth_ridge.unwrap_or(0.0))
    }

    /// True when the polyhedral part vanishes identically.
    pub fn polyhedral_is_zero(&self) -> bool {
        if self.alpha == 0.0 {
            return true;
        }
        match &self.family {
            Family::Ridge { .. } => true,
            Family::Lasso { lambda } | Family::GeneralizedLasso { lambda, .. } => *lambda == 0.0,
            Family::Slope { lambda } => lambda.iter().all(|l| *l == 0.0),
        }
    }

    pub(crate) fn require_pattern_support(&self) -> Result<()> {
        match &self.family {
            Family::Slope { lambda } => {
                let strict = lambda.as_slice().windows(2).all(|w| w[0] > w[1]);
                if !strict || lambda[lambda.len() - 1] <= 0.0 {
                    return Err(Error::UnsupportedPattern(
                        "SLOPE pattern operations need strictly decreasing positive weights".into(),
                    ));
                }
                Ok(())
            }
            Family::Lasso { lambda } | Family::GeneralizedLasso { lambda, .. } if *lambda <= 0.0 => {
                Err(Error::UnsupportedPattern("pattern operations need lambda > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn fused_matrix(weights: &[f64], sparsity: Option<f64>) -> DMatrix<f64> {
    let p = weights.len() + 1;
    let extra = match sparsity {
        Some(a) if a > 0.0 => p,
        _ => 0,
    };
    let mut m = DMatrix::zeros(weights.len() + extra, p);
    for (i, w) in weights.iter().enumerate() {
        m[(i, i)] = *w;
        m[(i, i + 1)] = -*w;
    }
    if extra > 0 {
        let a = sparsity.unwrap();
        for i in 0..p {
            m[(weights.len() + i, i)] = a;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    Sign,
    GeneralizedSign,
    RankSign,
    Trivial,
}

/// Canonical pattern code. `dim` is the ambient dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub kind: PatternKind,
    pub code: Vec<i32>,
    pub dim: usize,
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<String> = self.code.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub indices: Vec<usize>,
    pub signs: Vec<f64>,
}

/// Zero set plus nonzero clusters ordered by increasing rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub zero: Vec<usize>,
    pub clusters: Vec<Cluster>,
}

impl ClusterPartition {
    pub fn from_code(code: &[i32]) -> Self {
        let m = code.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0) as usize;
        let mut clusters = vec![Cluster { indices: vec![], signs: vec![] }; m];
        let mut zero = vec![];
        for (i, &c) in code.iter().enumerate() {
            if c == 0 {
                zero.push(i);
            } else {
                let cl = &mut clusters[c.unsigned_abs() as usize - 1];
                cl.indices.push(i);
                cl.signs.push(c.signum() as f64);
            }
        }
        Self { zero, clusters }
    }
}

pub fn default_tol(v: &DVector<f64>) -> f64 {
    PATTERN_TOL * v.amax().max(1.0)
}

fn snap_sign(v: f64, tol: f64) -> i32 {
    if v.abs() <= tol {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Groups sorted values into consecutive runs whose neighbours differ by at most `tol`.
fn group_ids(sorted: &[f64], tol: f64) -> Vec<usize> {
    let mut ids = Vec::with_capacity(sorted.len());
    let mut g = 0;
    for (k, v) in sorted.iter().enumerate() {
        if k > 0 && v - sorted[k - 1] > tol {
            g += 1;
        }
        ids.push(g);
    }
    ids
}

fn slope_code(x: &DVector<f64>, u: Option<&DVector<f64>>, tol_x: f64, tol_u: f64) -> Vec<i32> {
    let p = x.len();
    // coarse rank of |x|, 0 for zero
    let mut xr = vec![0usize; p];
    let mut nz: Vec<usize> = (0..p).filter(|&i| x[i].abs() > tol_x).collect();
    nz.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()));
    let mags: Vec<f64> = nz.iter().map(|&i| x[i].abs()).collect();
    for (k, g) in group_ids(&mags, tol_x).into_iter().enumerate() {
        xr[nz[k]] = g + 1;
    }
    let second = |i: usize| -> f64 {
        match u {
            None => 0.0,
            Some(u) => {
                if xr[i] > 0 {
                    x[i].signum() * u[i]
                } else {
                    u[i].abs()
                }
            }
        }
    };
    let mut live: Vec<usize> = (0..p).filter(|&i| xr[i] > 0 || second(i) > tol_u).collect();
    live.sort_by(|&a, &b| xr[a].cmp(&xr[b]).then(second(a).total_cmp(&second(b))));
    let mut code = vec![0i32; p];
    let mut rank = 0i32;
    for (k, &i) in live.iter().enumerate() {
        let new_group = k == 0 || {
            let j = live[k - 1];
            xr[i] != xr[j] || second(i) - second(j) > tol_u
        };
        if new_group {
            rank += 1;
        }
        let s = if xr[i] > 0 { x[i].signum() } else { u.map(|u| u[i].signum()).unwrap_or(0.0) };
        code[i] = rank * s as i32;
    }
    code
}

/// Signed rank code of `|x|` for any weights (no strictness requirement).
pub fn rank_sign_code(x: &DVector<f64>, tol: f64) -> Vec<i32> {
    slope_code(x, None, tol, 0.0)
}

pub fn pattern_of(spec: &PenaltySpec, x: &DVector<f64>) -> Result<Pattern> {
    let tol = match &spec.family {
        Family::GeneralizedLasso { a, .. } if a.ncols() == x.len() => default_tol(&(a * x)),
        _ => default_tol(x),
    };
    pattern_of_tol(spec, x, tol)
}

pub fn pattern_of_tol(spec: &PenaltySpec, x: &DVector<f64>, tol: f64) -> Result<Pattern> {
    spec.check_dim(x.len())?;
    spec.require_pattern_support()?;
    let p = x.len();
    Ok(match &spec.family {
        Family::Lasso { .. } => Pattern { kind: PatternKind::Sign, code: x.iter().map(|v| snap_sign(*v, tol)).collect(), dim: p },
        Family::GeneralizedLasso { a, .. } => {
            let ax = a * x;
            Pattern { kind: PatternKind::GeneralizedSign, code: ax.iter().map(|v| snap_sign(*v, tol)).collect(), dim: p }
        }
        Family::Slope { .. } => Pattern { kind: PatternKind::RankSign, code: slope_code(x, None, tol, 0.0), dim: p },
        Family::Ridge { .. } => Pattern { kind: PatternKind::Trivial, code: vec![], dim: p },
    })
}

/// Pattern of `x + eps u` for all sufficiently small `eps > 0`.
pub fn limiting_pattern(spec: &PenaltySpec, x: &DVector<f64>, u: &DVector<f64>) -> Result<Pattern> {
    if x.len() != u.len() {
        return Err(Error::Dimension(format!("x has length {}, u has length {}", x.len(), u.len())));
    }
    let (tx, tu) = match &spec.family {
        Family::GeneralizedLasso { a, .. } if a.ncols() == x.len() => (default_tol(&(a * x)), default_tol(&(a * u))),
        _ => (default_tol(x), default_tol(u)),
    };
    limiting_pattern_tol(spec, x, u, tx, tu)
}

pub fn limiting_pattern_tol(spec: &PenaltySpec, x: &DVector<f64>, u: &DVector<f64>, tol_x: f64, tol_u: f64) -> Result<Pattern> {
    spec.check_dim(x.len())?;
    spec.require_pattern_support()?;
    let p = x.len();
    let lim = |xv: f64, uv: f64| {
        let s = snap_sign(xv, tol_x);
        if s != 0 {
            s
        } else {
            snap_sign(uv, tol_u)
        }
    };
    Ok(match &spec.family {
        Family::Lasso { .. } => Pattern { kind: PatternKind::Sign, code: (0..p).map(|i| lim(x[i], u[i])).collect(), dim: p },
        Family::GeneralizedLasso { a, .. } => {
            let ax = a * x;
            let au = a * u;
            Pattern {
                kind: PatternKind::GeneralizedSign,
                code: (0..ax.len()).map(|i| lim(ax[i], au[i])).collect(),
                dim: p,
            }
        }
        Family::Slope { .. } => Pattern { kind: PatternKind::RankSign, code: slope_code(x, Some(u), tol_x, tol_u), dim: p },
        Family::Ridge { .. } => Pattern { kind: PatternKind::Trivial, code: vec![], dim: p },
    })
}

fn check_pattern(spec: &PenaltySpec, pat: &Pattern) -> Result<()> {
    spec.check_dim(pat.dim)?;
    let (kind, len) = match &spec.family {
        Family::Lasso { .. } => (PatternKind::Sign, pat.dim),
        Family::GeneralizedLasso { a, .. } => (PatternKind::GeneralizedSign, a.nrows()),
        Family::Slope { .. } => (PatternKind::RankSign, pat.dim),
        Family::Ridge { .. } => (PatternKind::Trivial, 0),
    };
    if pat.kind != kind || pat.code.len() != len {
        return Err(Error::InvalidArgument(format!("pattern {:?} does not belong to the {} family", pat.kind, spec.name())));
    }
    Ok(())
}

/// Basis of the pattern space of a pattern code.
pub fn basis_for_pattern(spec: &PenaltySpec, pat: &Pattern) -> Result<Basis> {
    check_pattern(spec, pat)?;
    let p = pat.dim;
    let m = match &spec.family {
        Family::Lasso { .. } => {
            let cols: Vec<DVector<f64>> = (0..p)
                .filter(|&i| pat.code[i] != 0)
                .map(|i| DVector::from_fn(p, |j, _| if j == i { 1.0 } else { 0.0 }))
                .collect();
            cols_to_matrix(p, &cols)
        }
        Family::GeneralizedLasso { a, .. } => {
            let rows: Vec<usize> = (0..a.nrows()).filter(|&i| pat.code[i] == 0).collect();
            let sub = a.select_rows(rows.iter());
            null_space(&sub, RANK_TOL)
        }
        Family::Slope { .. } => {
            let part = ClusterPartition::from_code(&pat.code);
            let cols: Vec<DVector<f64>> = part
                .clusters
                .iter()
                .rev()
                .map(|c| {
                    let mut v = DVector::zeros(p);
                    for (i, s) in c.indices.iter().zip(&c.signs) {
                        v[*i] = *s;
                    }
                    v
                })
                .collect();
            cols_to_matrix(p, &cols)
        }
        Family::Ridge { .. } => DMatrix::identity(p, p),
    };
    Basis::new(m)
}

fn cols_to_matrix(p: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(p, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

pub fn pattern_basis(spec: &PenaltySpec, x: &DVector<f64>) -> Result<Basis> {
    basis_for_pattern(spec, &pattern_of(spec, x)?)
}

fn slope_sorted_sum(lambda: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let mut m: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m.iter().zip(lambda.iter()).map(|(a, l)| a * l).sum()
}

pub fn penalty_value(spec: &PenaltySpec, x: &DVector<f64>) -> Result<f64> {
    spec.check_dim(x.len())?;
    let f = match &spec.family {
        Family::Lasso { lambda } => lambda * x.lp_norm(1),
        Family::GeneralizedLasso { a, lambda } => lambda * (a * x).lp_norm(1),
        Family::Slope { lambda } => slope_sorted_sum(lambda, x),
        Family::Ridge { lambda } => 0.5 * lambda * x.norm_squared(),
    };
    let g = 0.5 * spec.smooth_ridge.unwrap_or(0.0) * x.norm_squared();
    Ok(spec.alpha * (f + g))
}

/// One-sided directional derivative `f'(x; u)`.
pub fn directional_derivative(spec: &PenaltySpec, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
    spec.check_dim(x.len())?;
    if x.len() != u.len() {
        return Err(Error::Dimension(format!("x has length {}, u has length {}", x.len(), u.len())));
    }
    let term = |xv: f64, uv: f64, tol: f64| if xv.abs() > tol { xv.signum() * uv } else { uv.abs() };
    let f = match &spec.family {
        Family::Lasso { lambda } => {
            let tol = default_tol(x);
            lambda * (0..x.len()).map(|i| term(x[i], u[i], tol)).sum::<f64>()
        }
        Family::GeneralizedLasso { a, lambda } => {
            let ax = a * x;
            let au = a * u;
            let tol = default_tol(&ax);
            lambda * (0..ax.len()).map(|i| term(ax[i], au[i], tol)).sum::<f64>()
        }
        Family::Slope { lambda } => {
            let tol = default_tol(x);
            let tol_u = default_tol(u);
            let code = slope_code(x, Some(u), tol, tol_u);
            // order by limiting magnitude, largest first
            let key = |i: usize| (code[i].unsigned_abs(), if x[i].abs() > tol { x[i].signum() * u[i] } else { u[i].abs() });
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&a, &b| {
                let (ra, sa) = key(a);
                let (rb, sb) = key(b);
                rb.cmp(&ra).then(sb.total_cmp(&sa))
            });
            idx.iter().enumerate().map(|(k, &i)| lambda[k] * term(x[i], u[i], tol)).sum::<f64>()
        }
        Family::Ridge { lambda } => lambda * u.dot(x),
    };
    let g = spec.smooth_ridge.unwrap_or(0.0) * u.dot(x);
    Ok(spec.alpha * (f + g))
}

/// Weights of a concavified fused lasso: diffs `a_1..a_m`, sparsity `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveFusedTuning {
    pub weights: Vec<f64>,
    pub sparsity: Option<f64>,
    pub nu: f64,
    pub kappa: f64,
}

impl ConcaveFusedTuning {
    pub fn with_sparsity(mut self, a: f64) -> Self {
        self.sparsity = Some(a);
        self
    }
    pub fn to_penalty(&self, lambda: f64) -> Result<PenaltySpec> {
        PenaltySpec::fused_lasso(&self.weights, self.sparsity, lambda)
    }
}

/// `a_i = nu (1 + kappa i (m + 1 - i))`, i = 1..m.
pub fn concavified_sequence(m: usize, nu: f64, kappa: f64) -> Result<ConcaveFusedTuning> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidArgument(format!("nu must be > 0, got {}", nu)));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa must be >= 0, got {}", kappa)));
    }
    let weights = (1..=m).map(|i| nu * (1.0 + kappa * (i * (m + 1 - i)) as f64)).collect();
    Ok(ConcaveFusedTuning { weights, sparsity: None, nu, kappa })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    pub valid: bool,
    pub concave: bool,
    /// `None` when no sparsity weight was set.
    pub sparsity_ok: Option<bool>,
    pub violations: Vec<String>,
}

pub fn check_concavified(t: &ConcaveFusedTuning) -> ConcavityReport {
    let mut seq = vec![0.0];
    seq.extend_from_slice(&t.weights);
    seq.push(0.0);
    let mut violations = vec![];
    for i in 1..seq.len() - 1 {
        let d2 = seq[i - 1] - 2.0 * seq[i] + seq[i + 1];
        if !(d2 < 0.0) {
            violations.push(format!("second difference at {} is {} (needs < 0)", i, d2));
        }
    }
    let concave = violations.is_empty();
    let sparsity_ok = t.sparsity.map(|a| {
        let bound = seq.windows(2).map(|w| w[0] + w[1]).fold(0.0, f64::max);
        let ok = a > 0.0 && a > bound;
        if !ok {
            violations.push(format!("sparsity weight {} must exceed max(a_i + a_(i+1)) = {}", a, bound));
        }
        ok
    });
    ConcavityReport { valid: concave && sparsity_ok.unwrap_or(true), concave, sparsity_ok, violations }
}

/// `lambda_i = Phi^{-1}(1 - q i / (2p))`.
pub fn bh_sequence(p: usize, q: f64) -> Result<Vec<f64>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("q must lie in (0, 1), got {}", q)));
    }
    let n = Normal::standard();
    Ok((1..=p).map(|i| n.inverse_cdf(1.0 - q * i as f64 / (2.0 * p as f64))).collect())
}

/// Linearly decreasing weights `p, p-1, .., 1` rescaled to sum to `total`.
pub fn linear_sequence(p: usize, total: f64) -> Vec<f64> {
    let s = (p * (p + 1)) as f64 / 2.0;
    (1..=p).map(|i| total * (p + 1 - i) as f64 / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn value_examples() {
        assert_relative_eq!(penalty_value(&PenaltySpec::lasso(1.0).unwrap(), &v(&[1.0, -2.0])).unwrap(), 3.0);
        assert_relative_eq!(penalty_value(&PenaltySpec::slope(vec![3.0, 2.0]).unwrap(), &v(&[1.0, -5.0])).unwrap(), 17.0);
    }

    #[test]
    fn pattern_examples() {
        let l = PenaltySpec::lasso(1.0).unwrap();
        assert_eq!(pattern_of(&l, &v(&[1.5, 0.0, -2.0])).unwrap().code, vec![1, 0, -1]);
        let f = PenaltySpec::fused_lasso(&[1.0, 1.0, 1.0], None, 1.0).unwrap();
        assert_eq!(pattern_of(&f, &v(&[1.0, 2.0, 2.0, 3.0])).unwrap().code, vec![-1, 0, -1]);
        let s = PenaltySpec::slope(vec![5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(pattern_of(&s, &v(&[1.7, 1.7, 2.3, 1.7, 0.0])).unwrap().code, vec![1, 1, 2, 1, 0]);
    }

    #[test]
    fn slope_needs_strict_weights_for_patterns() {
        let s = PenaltySpec::slope(vec![2.0, 2.0]).unwrap();
        assert!(matches!(pattern_of(&s, &v(&[1.0, 0.0])), Err(Error::UnsupportedPattern(_))));
    }

    #[test]
    fn limiting_examples() {
        let l = PenaltySpec::lasso(1.0).unwrap();
        assert_eq!(limiting_pattern(&l, &v(&[1.0, 0.0]), &v(&[-5.0, 2.0])).unwrap().code, vec![1, 1]);
        let s = PenaltySpec::slope(vec![3.0, 2.0]).unwrap();
        assert_eq!(limiting_pattern(&s, &v(&[1.0, 1.0]), &v(&[0.5, -0.2])).unwrap().code, vec![2, 1]);
        let u = v(&[0.3, -0.3]);
        assert_eq!(limiting_pattern(&s, &v(&[0.0, 0.0]), &u).unwrap(), pattern_of(&s, &u).unwrap());
    }

    #[test]
    fn basis_examples() {
        let f = PenaltySpec::fused_lasso(&[1.0, 1.0, 1.0], None, 1.0).unwrap();
        let b = pattern_basis(&f, &v(&[1.0, 2.0, 2.0, 3.0])).unwrap();
        assert_eq!(b.dim(), 3);
        let proj = b.projector();
        for w in [v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 1.0, 1.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])] {
            assert!((&proj * &w - &w).amax() < 1e-12);
        }
        let s = PenaltySpec::slope(vec![5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        let b = pattern_basis(&s, &v(&[1.7, 1.7, 2.3, 1.7, 0.0])).unwrap();
        assert_eq!(b.matrix().column(0).as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(b.matrix().column(1).as_slice(), &[1.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn directional_examples() {
        let r = PenaltySpec::ridge(2.0).unwrap();
        assert_relative_eq!(directional_derivative(&r, &v(&[1.0, -1.0]), &v(&[3.0, 3.0])).unwrap(), 0.0);
        let l = PenaltySpec::lasso(1.0).unwrap();
        assert_relative_eq!(directional_derivative(&l, &v(&[1.0, 0.0]), &v(&[2.0, -3.0])).unwrap(), 5.0);
        let s = PenaltySpec::slope(vec![3.0, 2.0]).unwrap();
        assert_relative_eq!(directional_derivative(&s, &v(&[1.0, 0.0]), &v(&[-1.0, 4.0])).unwrap(), 5.0);
    }

    #[test]
    fn concavified_examples() {
        let t = concavified_sequence(8, 0.8, 0.04).unwrap();
        assert_relative_eq!(t.weights[0], 1.056, epsilon = 1e-12);
        assert_relative_eq!(t.weights[3], 1.44, epsilon = 1e-12);
        assert!(concavified_sequence(3, 0.0, 0.1).is_err());
        let ok = ConcaveFusedTuning { weights: vec![1.0], sparsity: Some(1.5), nu: 1.0, kappa: 0.0 };
        assert!(check_concavified(&ok).valid);
        let flat = ConcaveFusedTuning { weights: vec![1.0, 1.0, 1.0], sparsity: Some(10.0), nu: 1.0, kappa: 0.0 };
        assert!(!check_concavified(&flat).valid);
        let single = ConcaveFusedTuning { weights: vec![], sparsity: Some(0.3), nu: 1.0, kappa: 0.0 };
        assert!(check_concavified(&single).valid);
    }

    #[test]
    fn bh_is_decreasing() {
        let l = bh_sequence(10, 0.5).unwrap();
        assert!(l.windows(2).all(|w| w[0] > w[1]));
        assert_relative_eq!(l[9], 0.6744897501960817, epsilon = 1e-9);
    }

    #[test]
    fn zero_rows_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        assert!(PenaltySpec::generalized_lasso(a, 1.0).is_err());
    }
}
