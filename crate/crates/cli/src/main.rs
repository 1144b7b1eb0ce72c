use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patternlab_cli::config::parse;
use patternlab_cli::runner::{run, RunError};
use patternlab_cli::{check, output, validate, MAX_NONCONVERGED};

#[derive(Parser)]
#[command(name = "patternlab", version, about = "Pattern-recovery experiments for polyhedral penalties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write `<stem>.csv` plus `<stem>.manifest.json`.
    Run {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (default: directory of the config's `output`, else the working directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Irrepresentability, attainability and concavity verdicts for a config.
    Check { config: PathBuf },
    /// Run the built-in oracle suite.
    Validate {
        #[arg(long)]
        quick: bool,
    },
}

fn load(path: &Path) -> Result<patternlab_cli::config::LoadedConfig, ExitCode> {
    let src = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {}", path.display(), e);
        ExitCode::from(2)
    })?;
    parse(&src).map_err(|e| {
        eprintln!("error: {}: {}", path.display(), e);
        ExitCode::from(2)
    })
}

fn run_cmd(path: &Path, threads: Option<usize>, out: Option<PathBuf>) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(c) => return c,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    if let Err(e) = pool.build_global() {
        eprintln!("error: thread pool: {}", e);
        return ExitCode::from(2);
    }
    let outcome = match run(&loaded) {
        Ok(o) => o,
        Err(e @ RunError::Invalid(_)) => {
            eprintln!("error: {}: {}", path.display(), e);
            return ExitCode::from(2);
        }
        Err(e @ RunError::Solver(_)) => {
            eprintln!("error: {}", e);
            return ExitCode::from(3);
        }
    };
    let cfg_out = loaded.config.output.as_ref().map(PathBuf::from);
    let stem = cfg_out
        .as_ref()
        .and_then(|p| p.file_stem())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    let dir = out
        .or_else(|| cfg_out.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf))
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    match output::write_outputs(&dir, &stem, &loaded.config, &outcome, rayon::current_num_threads()) {
        Ok((csv, man)) => println!("wrote {} and {}", csv.display(), man.display()),
        Err(e) => {
            eprintln!("error: writing results: {}", e);
            return ExitCode::from(2);
        }
    }
    if outcome.nonconverged_fraction() > MAX_NONCONVERGED {
        eprintln!("error: {} of {} replicates did not converge", outcome.nonconverged, outcome.replicates);
        return ExitCode::from(3);
    }
    if outcome.failed_checks > 0 {
        eprintln!("{} validation checks failed", outcome.failed_checks);
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn check_cmd(path: &Path) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(c) => return c,
    };
    match check::check_design(&loaded) {
        Ok(lines) => {
            for l in lines {
                println!("{}", l);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {}", path.display(), e);
            ExitCode::from(if matches!(e, RunError::Solver(_)) { 3 } else { 2 })
        }
    }
}

fn validate_cmd(quick: bool) -> ExitCode {
    let report = validate::run_suite(quick);
    for c in &report.checks {
        println!("[{}] {} ({} instances, {} ms): {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.instances, c.ms, c.detail);
    }
    let failed = report.failed();
    println!("{} passed, {} failed", report.checks.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, threads, out } => run_cmd(&config, threads, out),
        Command::Check { config } => check_cmd(&config),
        Command::Validate { quick } => validate_cmd(quick),
    }
}
