//! Experiment execution and result rows.

use std::time::Instant;

use nalgebra::DVector;
use patternlab::asymptotics::*;
use patternlab::estimators::{empirical_recovery_rate, fit_stage1, generate_data, snapped_pattern, three_step, two_step, two_step_recovery_rate, ScaleRule};
use patternlab::numerics::{RngStream, SpdMatrix};
use patternlab::regularizers::{pattern_of, PenaltySpec};
use patternlab::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{build_model, build_penalty, penalty_label, solver_config, ExperimentKind, LoadedConfig, MethodChoice};
use crate::validate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub penalty: String,
    pub grid1: Option<f64>,
    pub grid2: Option<f64>,
    pub estimate: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
    pub method: String,
    pub ms: u128,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    /// Replicates whose solver did not reach tolerance.
    pub nonconverged: usize,
    /// Replicates that went through an iterative solver.
    pub replicates: usize,
    /// Failed checks of the validation suite.
    pub failed_checks: usize,
}

impl RunOutcome {
    pub fn nonconverged_fraction(&self) -> f64 {
        if self.replicates == 0 {
            0.0
        } else {
            self.nonconverged as f64 / self.replicates as f64
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Configuration or model problem; exit code 2.
    Invalid(String),
    /// Solver trouble; exit code 3.
    Solver(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Invalid(m) | RunError::Solver(m) => write!(f, "{}", m),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } | Error::CriterionDisagreement { .. } => RunError::Solver(e.to_string()),
            _ => RunError::Invalid(e.to_string()),
        }
    }
}

impl From<crate::config::ConfigError> for RunError {
    fn from(e: crate::config::ConfigError) -> Self {
        RunError::Invalid(e.to_string())
    }
}

struct Ctx<'a> {
    l: &'a LoadedConfig,
    out: RunOutcome,
}

impl Ctx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, penalty: &str, grid1: Option<f64>, grid2: Option<f64>, estimate: f64, se: f64, reps: usize, method: &str, ms: u128) {
        self.out.rows.push(ResultRow {
            experiment: self.l.config.experiment.as_str().to_string(),
            penalty: penalty.to_string(),
            grid1,
            grid2,
            estimate,
            se,
            reps,
            seed: self.l.config.seed,
            method: method.to_string(),
            ms,
        });
    }

    fn push_est(&mut self, penalty: &str, grid1: Option<f64>, grid2: Option<f64>, e: &RecoveryEstimate, method: &str, ms: u128) {
        self.out.nonconverged += e.nonconverged;
        if matches!(e.method, Method::Direct | Method::FiniteN) {
            self.out.replicates += e.reps;
        }
        self.push(penalty, grid1, grid2, e.p_hat, e.se, e.reps, method, ms);
    }
}

fn penalties(l: &LoadedConfig, p: usize) -> Result<Vec<(String, PenaltySpec)>, RunError> {
    (0..l.config.penalties.len())
        .map(|i| {
            let s = build_penalty(l, i, p)?;
            Ok((penalty_label(l, i, &s), s))
        })
        .collect()
}

fn scaled(s: &PenaltySpec, a: f64) -> Result<PenaltySpec, RunError> {
    Ok(s.clone().with_alpha(s.alpha * a)?)
}

fn ms(t: Instant) -> u128 {
    t.elapsed().as_millis()
}

fn grid(g: &Option<crate::config::Grid>) -> Vec<f64> {
    g.as_ref().map(|g| g.values()).unwrap_or_default()
}

pub fn run(l: &LoadedConfig) -> Result<RunOutcome, RunError> {
    let mut ctx = Ctx { l, out: RunOutcome::default() };
    match l.config.experiment {
        ExperimentKind::Validate => {
            let report = validate::run_suite(l.config.quick);
            for c in &report.checks {
                ctx.push(&c.name, None, None, if c.passed { 1.0 } else { 0.0 }, 0.0, c.instances, "validate", c.ms);
            }
            ctx.out.failed_checks = report.failed();
        }
        ExperimentKind::RecoveryCurve => recovery_curve(&mut ctx)?,
        ExperimentKind::RmseCurve => rmse(&mut ctx)?,
        ExperimentKind::PhaseTransition => phase_transition(&mut ctx)?,
        ExperimentKind::TwoStepCurve => two_step_curve(&mut ctx)?,
        ExperimentKind::ThreeStepDemo => three_step_demo(&mut ctx)?,
        ExperimentKind::IrrepReport => irrep(&mut ctx)?,
    }
    Ok(ctx.out)
}

fn recovery_cell(ctx: &mut Ctx, model: &ModelSpec, label: &str, s: &PenaltySpec, g1: f64, g2: Option<f64>) -> Result<(), RunError> {
    let c = &ctx.l.config;
    let cfg = solver_config(c);
    if c.method != MethodChoice::ClosedForm {
        let t = Instant::now();
        let e = recovery_probability_direct(model, s, c.reps, c.seed, &cfg)?;
        ctx.push_est(label, Some(g1), g2, &e, "direct", ms(t));
    }
    if c.method != MethodChoice::Direct {
        let t = Instant::now();
        let e = recovery_probability_closed_form(model, s, c.reps, c.seed)?;
        ctx.push_est(label, Some(g1), g2, &e, "closed_form", ms(t));
    }
    Ok(())
}

fn recovery_curve(ctx: &mut Ctx) -> Result<(), RunError> {
    let l = ctx.l;
    let model = build_model(l)?;
    let cfg = solver_config(&l.config);
    let ns: Vec<usize> = grid(&l.config.n_grid).iter().map(|n| *n as usize).collect();
    for (label, spec) in penalties(l, model.dim())? {
        for a in grid(&l.config.alpha_grid) {
            recovery_cell(ctx, &model, &label, &scaled(&spec, a)?, a, None)?;
            if !ns.is_empty() {
                let t = Instant::now();
                let rows = empirical_recovery_rate(&model, &spec, &ns, a, l.config.reps, l.config.seed, &cfg)?;
                let el = ms(t);
                for (n, e) in rows {
                    ctx.push_est(&label, Some(a), Some(n as f64), &e, "finite_n", el);
                }
            }
        }
    }
    Ok(())
}

fn rmse(ctx: &mut Ctx) -> Result<(), RunError> {
    let l = ctx.l;
    let model = build_model(l)?;
    let cfg = solver_config(&l.config);
    let alphas = grid(&l.config.alpha_grid);
    for (label, spec) in penalties(l, model.dim())? {
        for &a in &alphas {
            let t = Instant::now();
            let pt = rmse_curve(&model, &spec, &[a], l.config.reps, l.config.seed, &cfg)?.remove(0);
            let el = ms(t);
            ctx.out.nonconverged += pt.recovery.nonconverged;
            ctx.out.replicates += pt.recovery.reps;
            ctx.push(&label, Some(a), None, pt.rmse, pt.se, l.config.reps, "rmse_direct", el);
            ctx.push(&label, Some(a), None, pt.recovery.p_hat, pt.recovery.se, l.config.reps, "recovery_direct", el);
        }
        let t = Instant::now();
        let base = reduced_ols_baseline(&model, &spec)?;
        ctx.push(&label, None, None, base.rmse, 0.0, 0, "reduced_ols", ms(t));
    }
    Ok(())
}

fn phase_transition(ctx: &mut Ctx) -> Result<(), RunError> {
    let l = ctx.l;
    let base = build_model(l)?;
    let p = base.dim();
    for (label, spec) in penalties(l, p)? {
        for rho in grid(&l.config.rho_grid) {
            let model = ModelSpec::new(base.beta0.clone(), SpdMatrix::equicorrelated(p, rho)?, base.sigma)?;
            for a in grid(&l.config.alpha_grid) {
                recovery_cell(ctx, &model, &label, &scaled(&spec, a)?, rho, Some(a))?;
            }
        }
    }
    Ok(())
}

fn two_step_curve(ctx: &mut Ctx) -> Result<(), RunError> {
    let l = ctx.l;
    let c = &l.config;
    let model = build_model(l)?;
    let cfg = solver_config(c);
    let ns: Vec<usize> = grid(&c.n_grid).iter().map(|n| *n as usize).collect();
    for (label, spec) in penalties(l, model.dim())? {
        for a in grid(&c.alpha_grid) {
            let s = scaled(&spec, a)?;
            if c.method != MethodChoice::ClosedForm {
                let t = Instant::now();
                let e = two_step_limit_direct(&model, &s, c.reps, c.seed, &cfg)?;
                ctx.push_est(&label, Some(a), None, &e, "two_step_direct", ms(t));
            }
            if c.method != MethodChoice::Direct {
                let t = Instant::now();
                let e = two_step_limit_closed_form(&model, &s, c.reps, c.seed)?;
                ctx.push_est(&label, Some(a), None, &e, "two_step_closed_form", ms(t));
            }
            let t = Instant::now();
            let e = recovery_probability_direct(&model, &s, c.reps, c.seed, &cfg)?;
            ctx.push_est(&label, Some(a), None, &e, "one_step_direct", ms(t));
            for &n in &ns {
                let t = Instant::now();
                let e = two_step_recovery_rate(&model, &spec, n, a, c.reps, c.seed)?;
                ctx.push_est(&label, Some(a), Some(n as f64), &e, "two_step_finite_n", ms(t));
            }
        }
    }
    Ok(())
}

struct DemoRun {
    recovered: bool,
    rmse: [f64; 3],
    converged: bool,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn three_step_demo(ctx: &mut Ctx) -> Result<(), RunError> {
    let l = ctx.l;
    let c = &l.config;
    let model = build_model(l)?;
    let cfg = solver_config(c);
    let n = c.n.unwrap_or(100);
    let a1 = c.stage1_alpha.unwrap_or(0.07);
    let a2 = c.stage2_alpha.unwrap_or(42.0);
    let (label, spec) = penalties(l, model.dim())?.remove(0);
    let stage1 = scaled(&spec, a1)?;
    let truth = pattern_of(&spec, &model.beta0)?;
    let p = model.dim() as f64;
    let rmse = |b: &DVector<f64>| ((b - &model.beta0).norm_squared() / p).sqrt();
    let t = Instant::now();
    let runs: Result<Vec<DemoRun>, Error> = (0..c.reps as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate_data(&model, n, &mut RngStream::new(c.seed, r))?;
            let fit = fit_stage1(&data, &stage1, ScaleRule::SqrtN, &cfg)?;
            let beta2 = two_step(&fit.solution, &spec, a2, n)?;
            let pat2 = snapped_pattern(&spec, &beta2)?;
            let recovered = pat2 == truth;
            let r3 = three_step(&data, &pat2, &spec).map(|b| rmse(&b)).unwrap_or(f64::NAN);
            Ok(DemoRun { recovered, rmse: [rmse(&fit.solution), rmse(&beta2), r3], converged: fit.converged })
        })
        .collect();
    let runs = runs?;
    let el = ms(t);
    ctx.out.replicates += runs.len();
    ctx.out.nonconverged += runs.iter().filter(|r| !r.converged).count();
    let k = runs.len();
    let hits = runs.iter().filter(|r| r.recovered).count();
    let est = RecoveryEstimate::from_count(hits, k, c.seed, Method::FiniteN);
    let (g1, g2) = (Some(n as f64), Some(a2));
    ctx.push(&label, g1, g2, est.p_hat, est.se, k, "stage2_recovery", el);
    for (i, name) in ["stage1_rmse", "stage2_rmse", "stage3_rmse"].iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.rmse[i]).filter(|x| x.is_finite()).collect();
        let (m, se) = mean_se(&xs);
        ctx.push(&label, g1, g2, m, se, xs.len(), name, el);
    }
    let rec: Vec<f64> = runs.iter().filter(|r| r.recovered).map(|r| r.rmse[2] / r.rmse[1]).collect();
    let (m, se) = mean_se(&rec);
    ctx.push(&label, g1, g2, m, se, rec.len(), "stage3_over_stage2_recovered", el);
    Ok(())
}

fn irrep(ctx: &mut Ctx) -> Result<(), RunError> {
    let l = ctx.l;
    let model = build_model(l)?;
    for (label, spec) in penalties(l, model.dim())? {
        let t = Instant::now();
        let r = irrepresentability_check(&model, &spec)?;
        let el = ms(t);
        ctx.push(&label, None, None, if r.holds { 1.0 } else { 0.0 }, 0.0, 0, "irrep_holds", el);
        ctx.push(&label, None, None, r.margin, 0.0, 0, "irrep_margin", el);
    }
    Ok(())
}
