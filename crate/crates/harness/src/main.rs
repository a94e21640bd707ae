//! `plsgd`: run experiments, print bound constants, verify invariants, fit rates.
//!
//! Exit status: 0 when every enabled audit passes, 1 when one fails, 2 on
//! errors. The worker count comes from `PLSGD_THREADS` (default: all cores).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plsgd_harness::experiment::{run_experiment_with, theory_for};
use plsgd_harness::output::{create_parent, emit, read_curve, summary_csv, write_text};
use plsgd_harness::stats::fit_rate;
use plsgd_harness::verify::verify_suite;
use plsgd_harness::{ExperimentConfig, HarnessError, Instance};
use serde_json::json;

#[derive(Parser)]
#[command(name = "plsgd", version, about = "SGD under PL with Markovian noise: experiments and bound audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment described by a TOML config.
    Run { config: PathBuf },
    /// Print the bound constants and hypothesis flags as JSON.
    Constants { config: PathBuf },
    /// Run the invariant and lemma checks for the configured problem.
    Verify { config: PathBuf },
    /// Fit a log-log slope to a column of an existing CSV.
    Rate {
        csv: PathBuf,
        #[arg(long, default_value = "mean_delta")]
        column: String,
        #[arg(long, default_value_t = 100)]
        k_min: usize,
        /// Exit 1 if the slope is below this value.
        #[arg(long, allow_hyphen_values = true)]
        slope_min: Option<f64>,
        /// Exit 1 if the slope is above this value.
        #[arg(long, allow_hyphen_values = true)]
        slope_max: Option<f64>,
    },
}

fn threads() -> Result<usize, HarnessError> {
    match std::env::var("PLSGD_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("PLSGD_THREADS = \"{v}\" is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn print_json(v: &impl serde::Serialize) {
    // A closed pipe downstream is not an error of ours.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(config: &Path) -> Result<bool, HarnessError> {
    let cfg = ExperimentConfig::load(config)?;
    let out = &cfg.output;
    let summary = match &out.trajectories {
        Some(path) => {
            create_parent(path)?;
            let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
            let mut w = BufWriter::new(file);
            let s = run_experiment_with(&cfg, threads()?, Some(&mut w))?;
            w.flush().map_err(|e| HarnessError::io(path, e))?;
            s
        }
        None => run_experiment_with(&cfg, threads()?, None)?,
    };
    emit(&summary, out.csv.as_deref(), out.json.as_deref())?;
    if let Some(path) = &out.chain {
        match Instance::build(&cfg.problem)?.finite_chain() {
            Some(chain) => write_text(path, &chain.to_text())?,
            None => eprintln!("note: {} has no finite chain; {} not written", summary.problem.name, path.display()),
        }
    }
    if out.csv.is_none() && out.json.is_none() {
        let _ = write!(std::io::stdout(), "{}", summary_csv(&summary));
    }
    for d in &summary.diverged {
        eprintln!("trial {} diverged at k = {}", d.trial, d.k);
    }
    for a in &summary.audits {
        eprintln!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    Ok(summary.passed)
}

fn constants(config: &Path) -> Result<bool, HarnessError> {
    let cfg = ExperimentConfig::load(config)?;
    let inst = Instance::build(&cfg.problem)?;
    let (problem, constants) = theory_for(&inst, &cfg)?;
    print_json(&json!({ "problem": problem, "constants": constants }));
    Ok(true)
}

fn verify(config: &Path) -> Result<bool, HarnessError> {
    let cfg = ExperimentConfig::load(config)?;
    let outcome = verify_suite(&cfg)?;
    print_json(&outcome);
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {} (worst slack {:e} over {} evaluations)", c.name, c.worst_slack, c.evaluations);
    }
    Ok(outcome.passed)
}

fn rate(csv: &Path, column: &str, k_min: usize, lo: Option<f64>, hi: Option<f64>) -> Result<bool, HarnessError> {
    let text = std::fs::read_to_string(csv).map_err(|e| HarnessError::io(csv, e))?;
    let (ks, vs) = read_curve(&text, column)?;
    let fit = fit_rate(&ks, &vs, k_min)?;
    print_json(&fit);
    Ok(lo.is_none_or(|lo| fit.slope >= lo) && hi.is_none_or(|hi| fit.slope <= hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::Constants { config } => constants(config),
        Command::Verify { config } => verify(config),
        Command::Rate { csv, column, k_min, slope_min, slope_max } => rate(csv, column, *k_min, *slope_min, *slope_max),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
