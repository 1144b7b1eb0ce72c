//! Experiment configuration: a single JSON document.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use patternlab::asymptotics::ModelSpec;
use patternlab::numerics::SpdMatrix;
use patternlab::regularizers::{bh_sequence, concavified_sequence, linear_sequence, PenaltySpec};
use patternlab::solvers::SolverConfig;
use serde::{Deserialize, Serialize};

/// Minimum replicates for curve experiments.
pub const MIN_CURVE_REPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RecoveryCurve,
    RmseCurve,
    PhaseTransition,
    TwoStepCurve,
    ThreeStepDemo,
    IrrepReport,
    Validate,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::RecoveryCurve => "recovery_curve",
            ExperimentKind::RmseCurve => "rmse_curve",
            ExperimentKind::PhaseTransition => "phase_transition",
            ExperimentKind::TwoStepCurve => "two_step_curve",
            ExperimentKind::ThreeStepDemo => "three_step_demo",
            ExperimentKind::IrrepReport => "irrep_report",
            ExperimentKind::Validate => "validate",
        }
    }

    pub fn is_curve(&self) -> bool {
        matches!(
            self,
            ExperimentKind::RecoveryCurve | ExperimentKind::RmseCurve | ExperimentKind::PhaseTransition | ExperimentKind::TwoStepCurve
        )
    }
}

/// Either an explicit list or `{start, stop, count}` expanded linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, count } => match count {
                0 => vec![],
                1 => vec![*start],
                _ => (0..*count).map(|i| start + (stop - start) * i as f64 / (*count - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceConfig {
    Identity,
    Equicorrelated { rho: f64 },
    BlockEquicorrelated { blocks: usize, size: usize, rho: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub beta0: Vec<f64>,
    #[serde(default = "default_cov")]
    pub covariance: CovarianceConfig,
    pub sigma: f64,
}

fn default_cov() -> CovarianceConfig {
    CovarianceConfig::Identity
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyConfig {
    Lasso {
        #[serde(default = "one")]
        lambda: f64,
    },
    Ridge {
        #[serde(default = "one")]
        lambda: f64,
    },
    /// Exactly one of `lambda`, `bh` (q level) or `linear` (total weight).
    Slope {
        lambda: Option<Vec<f64>>,
        bh: Option<f64>,
        linear: Option<f64>,
    },
    FusedLasso {
        weights: Vec<f64>,
        sparsity: Option<f64>,
        #[serde(default = "one")]
        lambda: f64,
    },
    ConcavifiedFused {
        nu: f64,
        kappa: f64,
        sparsity: Option<f64>,
        #[serde(default = "one")]
        lambda: f64,
    },
    GeneralizedLasso {
        a: Vec<Vec<f64>>,
        #[serde(default = "one")]
        lambda: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub label: Option<String>,
    pub smooth_ridge: Option<f64>,
    #[serde(flatten)]
    pub family: FamilyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Direct,
    ClosedForm,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iter: Option<usize>,
    pub tol_kkt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub penalties: Vec<PenaltyConfig>,
    pub alpha_grid: Option<Grid>,
    pub rho_grid: Option<Grid>,
    pub n_grid: Option<Grid>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub method: MethodChoice,
    /// Candidate pattern codes for the attainability table.
    #[serde(default)]
    pub candidates: Vec<Vec<i32>>,
    /// Sample size of the three-step demo.
    pub n: Option<usize>,
    pub stage1_alpha: Option<f64>,
    pub stage2_alpha: Option<f64>,
    pub output: Option<String>,
    pub solver: Option<SolverSettings>,
    #[serde(default)]
    pub quick: bool,
}

fn default_reps() -> usize {
    1000
}

fn default_seed() -> u64 {
    1
}

/// A configuration problem, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {}: {}", l, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Line of the `nth` occurrence of `"key"` in the source text.
fn locate(src: &str, key: &str, nth: usize) -> Option<usize> {
    let needle = format!("\"{}\"", key);
    let pos = src.match_indices(&needle).nth(nth)?.0;
    Some(src[..pos].matches('\n').count() + 1)
}

/// Parsed configuration with its source text for line anchoring.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: String,
}

impl LoadedConfig {
    pub fn err(&self, key: &str, nth: usize, message: impl Into<String>) -> ConfigError {
        ConfigError { line: locate(&self.source, key, nth), message: message.into() }
    }
}

pub fn parse(source: &str) -> Result<LoadedConfig, ConfigError> {
    let config: ExperimentConfig =
        serde_json::from_str(source).map_err(|e| ConfigError { line: Some(e.line()), message: e.to_string() })?;
    let loaded = LoadedConfig { config, source: source.to_string() };
    validate(&loaded)?;
    Ok(loaded)
}

fn check_grid(l: &LoadedConfig, key: &str, g: &Option<Grid>, required: bool) -> Result<(), ConfigError> {
    let g = match g {
        Some(g) => g,
        None if required => return Err(ConfigError { line: None, message: format!("{} is required for this experiment", key) }),
        None => return Ok(()),
    };
    if let Grid::Range { start, stop, count } = g {
        if *count == 0 || (*count > 1 && !(stop > start)) || (*count == 1 && start != stop) {
            return Err(l.err(key, 0, format!("{}: need count >= 1 and start < stop (start = stop when count = 1)", key)));
        }
    }
    let v = g.values();
    if v.is_empty() {
        return Err(l.err(key, 0, format!("{} is empty", key)));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(l.err(key, 0, format!("{} has non-finite values", key)));
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(l.err(key, 0, format!("{} must be strictly increasing", key)));
    }
    Ok(())
}

fn validate(l: &LoadedConfig) -> Result<(), ConfigError> {
    let c = &l.config;
    let kind = c.experiment;
    if kind == ExperimentKind::Validate {
        return Ok(());
    }
    if kind.is_curve() && c.reps < MIN_CURVE_REPS {
        return Err(l.err("reps", 0, format!("reps must be >= {} for {}, got {}", MIN_CURVE_REPS, kind.as_str(), c.reps)));
    }
    if c.reps == 0 {
        return Err(l.err("reps", 0, "reps must be >= 1"));
    }
    let needs_alpha = matches!(
        kind,
        ExperimentKind::RecoveryCurve | ExperimentKind::RmseCurve | ExperimentKind::PhaseTransition | ExperimentKind::TwoStepCurve
    );
    check_grid(l, "alpha_grid", &c.alpha_grid, needs_alpha)?;
    check_grid(l, "rho_grid", &c.rho_grid, kind == ExperimentKind::PhaseTransition)?;
    check_grid(l, "n_grid", &c.n_grid, false)?;
    if let Some(g) = &c.n_grid {
        if g.values().iter().any(|n| *n < 1.0 || n.fract() != 0.0) {
            return Err(l.err("n_grid", 0, "n_grid must contain positive integers"));
        }
    }
    if let Some(a) = c.alpha_grid.as_ref().map(|g| g.values()) {
        if a.iter().any(|x| *x < 0.0) {
            return Err(l.err("alpha_grid", 0, "alpha_grid must be nonnegative"));
        }
    }
    let model = c.model.as_ref().ok_or_else(|| ConfigError { line: None, message: "model is required".into() })?;
    if c.penalties.is_empty() {
        return Err(ConfigError { line: locate(&l.source, "penalties", 0), message: "at least one penalty is required".into() });
    }
    let p = model.beta0.len();
    if kind == ExperimentKind::PhaseTransition {
        let lo = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
        for r in c.rho_grid.as_ref().map(|g| g.values()).unwrap_or_default() {
            if !(r > lo && r < 1.0) {
                return Err(l.err("rho_grid", 0, format!("rho = {} does not give an SPD equicorrelation matrix for p = {}", r, p)));
            }
        }
    }
    build_model(l)?;
    for i in 0..c.penalties.len() {
        build_penalty(l, i, p)?;
    }
    if kind == ExperimentKind::ThreeStepDemo && c.n.unwrap_or(0) == 0 {
        return Err(ConfigError { line: None, message: "three_step_demo needs n >= 1".into() });
    }
    Ok(())
}

pub fn covariance(l: &LoadedConfig, cov: &CovarianceConfig, p: usize) -> Result<SpdMatrix, ConfigError> {
    let e = |m: String| l.err("covariance", 0, m);
    let c = match cov {
        CovarianceConfig::Identity => SpdMatrix::identity(p),
        CovarianceConfig::Equicorrelated { rho } => SpdMatrix::equicorrelated(p, *rho).map_err(|x| e(x.to_string()))?,
        CovarianceConfig::BlockEquicorrelated { blocks, size, rho } => {
            SpdMatrix::block_equicorrelated(*blocks, *size, *rho).map_err(|x| e(x.to_string()))?
        }
        CovarianceConfig::Matrix { rows } => {
            if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                return Err(e(format!("covariance must be {}x{} to match beta0", p, p)));
            }
            let m = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
            SpdMatrix::new(m).map_err(|x| e(x.to_string()))?
        }
    };
    if c.dim() != p {
        return Err(e(format!("covariance is {}x{} but beta0 has length {}", c.dim(), c.dim(), p)));
    }
    Ok(c)
}

pub fn build_model(l: &LoadedConfig) -> Result<ModelSpec, ConfigError> {
    let m = l.config.model.as_ref().ok_or_else(|| ConfigError { line: None, message: "model is required".into() })?;
    let c = covariance(l, &m.covariance, m.beta0.len())?;
    ModelSpec::new(DVector::from_column_slice(&m.beta0), c, m.sigma).map_err(|e| l.err("model", 0, e.to_string()))
}

pub fn build_penalty(l: &LoadedConfig, i: usize, p: usize) -> Result<PenaltySpec, ConfigError> {
    let pc = &l.config.penalties[i];
    let e = |m: String| l.err("family", i, format!("penalties[{}]: {}", i, m));
    let spec = match &pc.family {
        FamilyConfig::Lasso { lambda } => PenaltySpec::lasso(*lambda),
        FamilyConfig::Ridge { lambda } => PenaltySpec::ridge(*lambda),
        FamilyConfig::Slope { lambda, bh, linear } => match (lambda, bh, linear) {
            (Some(w), None, None) => PenaltySpec::slope(w.clone()),
            (None, Some(q), None) => bh_sequence(p, *q).and_then(PenaltySpec::slope),
            (None, None, Some(t)) => PenaltySpec::slope(linear_sequence(p, *t)),
            _ => return Err(e("slope needs exactly one of lambda, bh, linear".into())),
        },
        FamilyConfig::FusedLasso { weights, sparsity, lambda } => PenaltySpec::fused_lasso(weights, *sparsity, *lambda),
        FamilyConfig::ConcavifiedFused { nu, kappa, sparsity, lambda } => {
            if p < 2 {
                return Err(e("concavified fused lasso needs p >= 2".into()));
            }
            concavified_sequence(p - 1, *nu, *kappa).and_then(|t| {
                let t = match sparsity {
                    Some(a) => t.with_sparsity(*a),
                    None => t,
                };
                t.to_penalty(*lambda)
            })
        }
        FamilyConfig::GeneralizedLasso { a, lambda } => {
            let rows = a.len();
            if rows == 0 || a.iter().any(|r| r.len() != p) {
                return Err(e(format!("A must have {} columns", p)));
            }
            PenaltySpec::generalized_lasso(DMatrix::from_fn(rows, p, |i, j| a[i][j]), *lambda)
        }
    }
    .map_err(|x| e(x.to_string()))?;
    let spec = match pc.smooth_ridge {
        Some(r) => spec.with_smooth_ridge(r).map_err(|x| e(x.to_string()))?,
        None => spec,
    };
    spec.check_dim(p).map_err(|x| e(x.to_string()))?;
    Ok(spec)
}

pub fn penalty_label(l: &LoadedConfig, i: usize, spec: &PenaltySpec) -> String {
    match &l.config.penalties[i].label {
        Some(s) => s.clone(),
        None => match &l.config.penalties[i].family {
            FamilyConfig::ConcavifiedFused { .. } => "concavified_fused".into(),
            FamilyConfig::FusedLasso { .. } => "fused_lasso".into(),
            _ => spec.name().to_string(),
        },
    }
}

pub fn solver_config(c: &ExperimentConfig) -> SolverConfig {
    let mut cfg = SolverConfig::default();
    if let Some(s) = &c.solver {
        if let Some(m) = s.max_iter {
            cfg.max_iter = m;
        }
        if let Some(t) = s.tol_kkt {
            cfg.tol_kkt = t;
        }
    }
    cfg
}
