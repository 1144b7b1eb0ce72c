//! CSV and manifest writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{ResultRow, RunOutcome};

pub const CSV_COLUMNS: [&str; 10] = ["experiment", "penalty", "grid1", "grid2", "estimate", "se", "reps", "seed", "method", "ms"];

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub seeds: Vec<u64>,
    pub rows: usize,
    pub nonconverged: usize,
    pub replicates: usize,
    pub threads: usize,
    pub csv: String,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(
        b"# columns: experiment id, penalty label, grid1 (alpha; rho for phase_transition; n for three_step_demo), grid2 (alpha for phase_transition, n for finite-n rows, stage-2 alpha for three_step_demo), estimate, standard error, replicates, seed, method tag, wall time in ms\n",
    );
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(CSV_COLUMNS)?;
        for r in rows {
            w.write_record([
                r.experiment.clone(),
                r.penalty.clone(),
                opt(r.grid1),
                opt(r.grid2),
                r.estimate.to_string(),
                r.se.to_string(),
                r.reps.to_string(),
                r.seed.to_string(),
                r.method.clone(),
                r.ms.to_string(),
            ])?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.manifest.json` and returns both paths.
pub fn write_outputs(dir: &Path, stem: &str, cfg: &ExperimentConfig, out: &RunOutcome, threads: usize) -> anyhow::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", stem));
    let man_path = dir.join(format!("{}.manifest.json", stem));
    write_csv(&csv_path, &out.rows)?;
    let mut seeds: Vec<u64> = out.rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds,
        rows: out.rows.len(),
        nonconverged: out.nonconverged,
        replicates: out.replicates,
        threads,
        csv: csv_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    fs::write(&man_path, serde_json::to_string_pretty(&m)?)?;
    Ok((csv_path, man_path))
}
