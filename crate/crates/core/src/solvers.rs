//! Proximal operators and the quadratic-plus-polyhedral minimizations used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{symmetric_lambda_max, SpdMatrix};
use crate::polytope::{enumerate_vertices, min_norm_point, subdifferential_at, subdifferential_for_pattern};
use crate::regularizers::{
    basis_for_pattern, default_tol, limiting_pattern, pattern_of, rank_sign_code, ClusterPartition, Family, Pattern,
    PatternKind, PenaltySpec,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol_kkt: f64,
    pub tol_step: f64,
    pub admm_rho: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iter: 100_000, tol_kkt: 1e-9, tol_step: 1e-12, admm_rho: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

pub fn prox_soft_threshold(y: &DVector<f64>, t: f64) -> DVector<f64> {
    y.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

/// Euclidean projection onto nonincreasing sequences (pool adjacent violators).
pub fn isotonic_decreasing(z: &[f64]) -> Vec<f64> {
    let mut sums: Vec<f64> = Vec::with_capacity(z.len());
    let mut counts: Vec<usize> = Vec::with_capacity(z.len());
    for &v in z {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let n = sums.len();
            if sums[n - 2] / counts[n - 2] as f64 <= sums[n - 1] / counts[n - 1] as f64 {
                let s = sums.pop().unwrap();
                let c = counts.pop().unwrap();
                sums[n - 2] += s;
                counts[n - 2] += c;
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(z.len());
    for (s, c) in sums.iter().zip(&counts) {
        let m = s / *c as f64;
        out.extend(std::iter::repeat(m).take(*c));
    }
    out
}

fn check_weights(lambda: &[f64]) -> Result<()> {
    if lambda.iter().any(|l| !(*l >= 0.0)) || lambda.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidPenalty("weights must be nonnegative and nonincreasing".into()));
    }
    Ok(())
}

/// Prox of the sorted-L1 norm.
pub fn prox_slope(y: &DVector<f64>, lambda: &[f64]) -> Result<DVector<f64>> {
    if y.len() != lambda.len() {
        return Err(Error::Dimension(format!("y has length {}, lambda has length {}", y.len(), lambda.len())));
    }
    check_weights(lambda)?;
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| y[b].abs().total_cmp(&y[a].abs()));
    let z: Vec<f64> = idx.iter().zip(lambda).map(|(&i, l)| y[i].abs() - l).collect();
    let iso = isotonic_decreasing(&z);
    let mut out = DVector::zeros(y.len());
    for (k, &i) in idx.iter().enumerate() {
        out[i] = y[i].signum() * iso[k].max(0.0);
    }
    Ok(out)
}

/// Prox of `u -> J'(beta0; u)` for the sorted-L1 norm.
pub fn prox_slope_directional(beta0: &DVector<f64>, lambda: &[f64], y: &DVector<f64>) -> Result<DVector<f64>> {
    let p = y.len();
    if beta0.len() != p || lambda.len() != p {
        return Err(Error::Dimension(format!(
            "beta0 {}, lambda {}, y {} must share a length",
            beta0.len(),
            lambda.len(),
            p
        )));
    }
    check_weights(lambda)?;
    let part = ClusterPartition::from_code(&rank_sign_code(beta0, default_tol(beta0)));
    let mut out = DVector::zeros(p);
    let mut pos = 0;
    for c in part.clusters.iter().rev() {
        let k = c.indices.len();
        let w = &lambda[pos..pos + k];
        pos += k;
        let t: Vec<f64> = c.indices.iter().zip(&c.signs).map(|(i, s)| s * y[*i]).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| t[b].total_cmp(&t[a]));
        let z: Vec<f64> = order.iter().zip(w).map(|(&j, l)| t[j] - l).collect();
        let iso = isotonic_decreasing(&z);
        for (r, &j) in order.iter().enumerate() {
            out[c.indices[j]] = c.signs[j] * iso[r];
        }
    }
    if !part.zero.is_empty() {
        let w = &lambda[pos..];
        let yz = DVector::from_iterator(part.zero.len(), part.zero.iter().map(|i| y[*i]));
        let pz = prox_slope(&yz, w)?;
        for (k, i) in part.zero.iter().enumerate() {
            out[*i] = pz[k];
        }
    }
    Ok(out)
}

/// Polyhedral term of a composite quadratic problem.
#[derive(Clone, Copy)]
enum Term<'a> {
    Plain(&'a PenaltySpec),
    Directional(&'a PenaltySpec, &'a DVector<f64>),
}

impl<'a> Term<'a> {
    fn spec(&self) -> &PenaltySpec {
        match self {
            Term::Plain(s) | Term::Directional(s, _) => s,
        }
    }

    fn prox(&self, y: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
        let spec = self.spec();
        let a = spec.alpha * step;
        match (&spec.family, self) {
            (Family::Lasso { lambda }, Term::Plain(_)) => Ok(prox_soft_threshold(y, a * lambda)),
            (Family::Lasso { lambda }, Term::Directional(_, b0)) => {
                prox_slope_directional(b0, &vec![a * lambda; y.len()], y)
            }
            (Family::Slope { lambda }, Term::Plain(_)) => {
                let w: Vec<f64> = lambda.iter().map(|l| a * l).collect();
                prox_slope(y, &w)
            }
            (Family::Slope { lambda }, Term::Directional(_, b0)) => {
                let w: Vec<f64> = lambda.iter().map(|l| a * l).collect();
                prox_slope_directional(b0, &w, y)
            }
            (Family::Ridge { .. }, _) => Ok(y.clone()),
            (Family::GeneralizedLasso { .. }, _) => unreachable!("handled by ADMM"),
        }
    }

    fn pattern(&self, u: &DVector<f64>) -> Result<Pattern> {
        match self {
            Term::Plain(s) => pattern_of(s, u),
            Term::Directional(s, b0) => limiting_pattern(s, b0, u),
        }
    }
}

fn poly_part(spec: &PenaltySpec) -> PenaltySpec {
    let mut s = spec.clone();
    s.smooth_ridge = None;
    s
}

/// Minimizer of `1/2 u'Hu - b'u` restricted to the pattern space, with the polyhedral term linearized on the face.
fn polish(h: &DMatrix<f64>, b: &DVector<f64>, spec: &PenaltySpec, pat: &Pattern) -> Option<DVector<f64>> {
    let basis = basis_for_pattern(spec, pat).ok()?;
    let face = subdifferential_for_pattern(spec, pat).ok()?;
    let u = basis.matrix();
    if u.ncols() == 0 {
        return Some(DVector::zeros(b.len()));
    }
    let g = u.transpose() * h * u;
    let rhs = u.transpose() * (b - face.center());
    let theta = g.cholesky()?.solve(&rhs);
    Some(u * theta)
}

/// KKT violation: distance-like slack of `b - Hu` from the face selected by `u`.
fn kkt_violation(h: &DMatrix<f64>, b: &DVector<f64>, term: Term, u: &DVector<f64>) -> Option<f64> {
    let pat = term.pattern(u).ok()?;
    let face = subdifferential_for_pattern(term.spec(), &pat).ok()?;
    face.violation(&(b - h * u)).ok()
}

fn direct_solve(h: &DMatrix<f64>, b: &DVector<f64>) -> Result<SolveReport> {
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("quadratic term is singular and the penalty has no polyhedral part".into()))?;
    let u = chol.solve(b);
    let kkt = (b - h * &u).amax();
    Ok(SolveReport { solution: u, iterations: 0, kkt_residual: kkt, converged: true })
}

/// Minimizes `1/2 u'Hu - b'u + phi(u)` with phi polyhedral (no smooth part).
fn solve_composite(h: &DMatrix<f64>, b: &DVector<f64>, term: Term, cfg: &SolverConfig) -> Result<SolveReport> {
    let spec = term.spec();
    if spec.polyhedral_is_zero() {
        return direct_solve(h, b);
    }
    if let Family::GeneralizedLasso { .. } = spec.family {
        return solve_admm(h, b, term, cfg);
    }
    let lip = symmetric_lambda_max(h);
    if !(lip > 0.0) {
        return Err(Error::InvalidArgument("quadratic term has no positive curvature".into()));
    }
    let step = 1.0 / lip;
    let p = b.len();
    let mut x = DVector::zeros(p);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut last_pat: Option<Pattern> = None;
    let mut stable = 0usize;
    let mut wait = 3usize;
    let patterns_ok = spec.require_pattern_support().is_ok();
    let mut kkt = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        let grad = h * &y - b;
        let xn = term.prox(&(&y - &grad * step), step)?;
        let dx = &xn - &x;
        // restart when momentum points uphill
        let restart = (&y - &xn).dot(&dx) > 0.0;
        let tn = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        y = if restart { xn.clone() } else { &xn + &dx * ((t - 1.0) / tn) };
        t = tn;
        x = xn;
        if patterns_ok {
            let pat = term.pattern(&x)?;
            if last_pat.as_ref() == Some(&pat) {
                stable += 1;
            } else {
                stable = 0;
                last_pat = Some(pat.clone());
            }
            if stable >= wait {
                stable = 0;
                wait = (wait * 2).min(2000);
                if let Some(k) = kkt_violation(h, b, term, &x) {
                    kkt = k;
                    if k <= cfg.tol_kkt {
                        return Ok(SolveReport { solution: x, iterations: it, kkt_residual: k, converged: true });
                    }
                }
                if let Some(u) = polish(h, b, spec, &pat) {
                    if let Some(k) = kkt_violation(h, b, term, &u) {
                        if k <= cfg.tol_kkt {
                            return Ok(SolveReport { solution: u, iterations: it, kkt_residual: k, converged: true });
                        }
                    }
                }
            }
        }
        if dx.amax() <= cfg.tol_step * x.amax().max(1.0) && it > 1 {
            kkt = if patterns_ok {
                kkt_violation(h, b, term, &x).unwrap_or(f64::INFINITY)
            } else {
                let g = h * &x - b;
                (&x - term.prox(&(&x - &g * step), step)?).amax() / step
            };
            return Ok(SolveReport { solution: x, iterations: it, kkt_residual: kkt, converged: kkt <= cfg.tol_kkt });
        }
    }
    if patterns_ok {
        kkt = kkt_violation(h, b, term, &x).unwrap_or(kkt);
    }
    Ok(SolveReport { solution: x, iterations: cfg.max_iter, kkt_residual: kkt, converged: kkt <= cfg.tol_kkt })
}

/// ADMM on `w = A u` for generalized lasso terms.
fn solve_admm(h: &DMatrix<f64>, b: &DVector<f64>, term: Term, cfg: &SolverConfig) -> Result<SolveReport> {
    let spec = term.spec();
    let (a, lambda) = match &spec.family {
        Family::GeneralizedLasso { a, lambda } => (a, *lambda),
        _ => unreachable!(),
    };
    let m = a.nrows();
    let c = spec.alpha * lambda;
    // fixed sign for rows that are linear in the directional case
    let fixed: Vec<i32> = match term {
        Term::Plain(_) => vec![0; m],
        Term::Directional(_, b0) => {
            let ab = a * b0;
            let tol = default_tol(&ab);
            ab.iter().map(|v| if v.abs() > tol { v.signum() as i32 } else { 0 }).collect()
        }
    };
    let rho = cfg.admm_rho;
    let k = h + a.transpose() * a * rho;
    let chol = k.cholesky().ok_or_else(|| Error::RankDeficient("H + rho A'A is singular".into()))?;
    let p = b.len();
    let mut w = DVector::zeros(m);
    let mut z = DVector::zeros(m);
    let mut u = DVector::zeros(p);
    let mut last_code: Option<Vec<i32>> = None;
    let mut stable = 0usize;
    let mut wait = 5usize;
    let mut kkt = f64::INFINITY;
    let scale = b.amax().max(c).max(1.0);
    let mut iters = 0;
    for it in 1..=cfg.max_iter {
        iters = it;
        u = chol.solve(&(b + a.transpose() * (&w - &z) * rho));
        let au = a * &u;
        let w_old = w.clone();
        for i in 0..m {
            let v = au[i] + z[i];
            w[i] = if fixed[i] != 0 { v - fixed[i] as f64 * c / rho } else { v.signum() * (v.abs() - c / rho).max(0.0) };
        }
        z += &au - &w;
        let r_p = (&au - &w).amax();
        let r_d = rho * (a.transpose() * (&w - &w_old)).amax();
        let code: Vec<i32> = (0..m)
            .map(|i| if fixed[i] != 0 { fixed[i] } else if w[i] > 0.0 { 1 } else if w[i] < 0.0 { -1 } else { 0 })
            .collect();
        if last_code.as_ref() == Some(&code) {
            stable += 1;
        } else {
            stable = 0;
            last_code = Some(code.clone());
        }
        if stable >= wait {
            stable = 0;
            wait = (wait * 2).min(2000);
            let pat = Pattern { kind: PatternKind::GeneralizedSign, code, dim: p };
            if let Some(up) = polish(h, b, spec, &pat) {
                if let Some(kv) = kkt_violation(h, b, term, &up) {
                    if kv <= cfg.tol_kkt {
                        return Ok(SolveReport { solution: up, iterations: it, kkt_residual: kv, converged: true });
                    }
                }
            }
        }
        kkt = r_p.max(r_d);
        if kkt <= cfg.tol_kkt * 1e-3 * scale {
            break;
        }
        if it == cfg.max_iter {
            return Ok(SolveReport { solution: u, iterations: it, kkt_residual: kkt, converged: false });
        }
    }
    let kv = kkt_violation(h, b, term, &u).unwrap_or(kkt);
    Ok(SolveReport { solution: u, iterations: iters, kkt_residual: kv, converged: kv <= cfg.tol_kkt })
}

/// `argmin_u 1/2 u'Cu - u'W + f'(beta0; u)`.
pub fn solve_v_min(c: &SpdMatrix, w: &DVector<f64>, spec: &PenaltySpec, beta0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolveReport> {
    let p = c.dim();
    if w.len() != p || beta0.len() != p {
        return Err(Error::Dimension(format!("C is {}x{}, W has {}, beta0 has {}", p, p, w.len(), beta0.len())));
    }
    spec.check_dim(p)?;
    let poly = poly_part(spec);
    let b = w - beta0 * spec.quadratic_weight();
    solve_composite(c.matrix(), &b, Term::Directional(&poly, beta0), cfg)
}

/// Same minimizer through the dual: project `W` onto `∂f(beta0)` in the `C^{-1}` metric
/// by a min-norm-point search over the enumerated vertices.
pub fn solve_v_min_vertices(c: &SpdMatrix, w: &DVector<f64>, spec: &PenaltySpec, beta0: &DVector<f64>, max_vertices: usize) -> Result<DVector<f64>> {
    let desc = subdifferential_at(spec, beta0)?;
    let verts = enumerate_vertices(&desc, max_vertices)?;
    let ih = c.inv_sqrt();
    let pts: Vec<DVector<f64>> = verts.vertices.iter().map(|v| ih * (w - v)).collect();
    let m = min_norm_point(&pts);
    Ok(ih * m)
}

/// `argmin_b 1/2 ||y - X b||^2 + f(b)`.
pub fn solve_penalized_ls(x: &DMatrix<f64>, y: &DVector<f64>, spec: &PenaltySpec, cfg: &SolverConfig) -> Result<SolveReport> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("X has {} rows, y has length {}", x.nrows(), y.len())));
    }
    let h = x.transpose() * x;
    let b = x.transpose() * y;
    solve_penalized_gram(&h, &b, spec, cfg)
}

/// Penalized least squares from the Gram form `H = X'X`, `b = X'y`.
pub fn solve_penalized_gram(h: &DMatrix<f64>, b: &DVector<f64>, spec: &PenaltySpec, cfg: &SolverConfig) -> Result<SolveReport> {
    spec.check_dim(b.len())?;
    let poly = poly_part(spec);
    let q = spec.quadratic_weight();
    let hq = if q > 0.0 { h + DMatrix::identity(b.len(), b.len()) * q } else { h.clone() };
    if spec.polyhedral_is_zero() {
        return direct_solve(&hq, b);
    }
    solve_composite(&hq, b, Term::Plain(&poly), cfg)
}

/// `argmin_x 1/2 ||x - y||^2 + scale f(x)`.
pub fn prox_penalty(spec: &PenaltySpec, y: &DVector<f64>, scale: f64) -> Result<DVector<f64>> {
    spec.check_dim(y.len())?;
    if !(scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("prox scale must be >= 0, got {}", scale)));
    }
    let r = scale * spec.quadratic_weight();
    let ys = y / (1.0 + r);
    let s = scale / (1.0 + r);
    let a = spec.alpha * s;
    match &spec.family {
        Family::Ridge { .. } => Ok(ys),
        Family::Lasso { lambda } => Ok(prox_soft_threshold(&ys, a * lambda)),
        Family::Slope { lambda } => {
            let w: Vec<f64> = lambda.iter().map(|l| a * l).collect();
            prox_slope(&ys, &w)
        }
        Family::GeneralizedLasso { .. } => {
            let mut poly = poly_part(spec);
            poly.alpha = a;
            let p = y.len();
            let rep = solve_composite(&DMatrix::identity(p, p), &ys, Term::Plain(&poly), &SolverConfig::default())?;
            if !rep.converged {
                return Err(Error::NotConverged { iterations: rep.iterations, residual: rep.kkt_residual });
            }
            Ok(rep.solution)
        }
    }
}
