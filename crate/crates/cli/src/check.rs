//! Design diagnostics behind `patternlab check`.

use nalgebra::DVector;
use patternlab::asymptotics::{attainability_check, irrepresentability_check};
use patternlab::regularizers::{check_concavified, concavified_sequence, ConcaveFusedTuning, Family, Pattern, PatternKind, PenaltySpec};

use crate::config::{build_model, build_penalty, penalty_label, FamilyConfig, LoadedConfig};
use crate::runner::RunError;

fn pattern_kind(spec: &PenaltySpec) -> (PatternKind, Option<usize>) {
    match &spec.family {
        Family::Lasso { .. } => (PatternKind::Sign, None),
        Family::Slope { .. } => (PatternKind::RankSign, None),
        Family::GeneralizedLasso { a, .. } => (PatternKind::GeneralizedSign, Some(a.nrows())),
        Family::Ridge { .. } => (PatternKind::Trivial, Some(0)),
    }
}

fn concavity_line(t: &ConcaveFusedTuning) -> String {
    let r = check_concavified(t);
    if r.valid {
        "valid".into()
    } else if !r.concave {
        format!("invalid: concavity ({})", r.violations.join("; "))
    } else {
        format!("invalid: sparsity ({})", r.violations.join("; "))
    }
}

/// One human-readable line per verdict.
pub fn check_design(l: &LoadedConfig) -> Result<Vec<String>, RunError> {
    let model = build_model(l)?;
    let p = model.dim();
    let beta0: DVector<f64> = model.beta0.clone();
    let mut lines = vec![];
    for (i, pc) in l.config.penalties.iter().enumerate() {
        let spec = build_penalty(l, i, p)?;
        let label = penalty_label(l, i, &spec);
        let r = irrepresentability_check(&model, &spec)?;
        let mut line = format!("{}: irrepresentability {}, margin {}", label, if r.holds { "holds" } else { "fails" }, r.margin);
        if let Some(note) = &r.boundary_note {
            line.push_str(&format!(" ({})", note));
        }
        lines.push(line);
        let tuning = match &pc.family {
            FamilyConfig::FusedLasso { weights, sparsity, .. } => {
                Some(ConcaveFusedTuning { weights: weights.clone(), sparsity: *sparsity, nu: f64::NAN, kappa: f64::NAN })
            }
            FamilyConfig::ConcavifiedFused { nu, kappa, sparsity, .. } => {
                let t = concavified_sequence(p - 1, *nu, *kappa)?;
                Some(match sparsity {
                    Some(a) => t.with_sparsity(*a),
                    None => t,
                })
            }
            _ => None,
        };
        if let Some(t) = tuning {
            lines.push(format!("{}: concavified tuning {}", label, concavity_line(&t)));
        }
        let (kind, len) = pattern_kind(&spec);
        for code in &l.config.candidates {
            if code.len() != len.unwrap_or(p) {
                continue;
            }
            let cand = Pattern { kind, code: code.clone(), dim: p };
            let verdict = match attainability_check(&spec, &beta0, &cand) {
                Ok(true) => "attainable".to_string(),
                Ok(false) => "not attainable".to_string(),
                Err(e) => format!("error: {}", e),
            };
            lines.push(format!("{}: candidate {} {}", label, cand, verdict));
        }
    }
    Ok(lines)
}
