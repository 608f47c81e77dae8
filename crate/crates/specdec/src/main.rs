//! Thin command-line front end over the library drivers.
//!
//! Exit codes: 0 on success, 1 when a verification suite or internal
//! assertion fails, 2 on config or I/O problems.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specdec::config::ExperimentConfig;
use specdec::runner;
use specdec::Error;

#[derive(Parser)]
#[command(name = "specdec", version, about = "Relaxed speculative decoding, exactly")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the JSON experiment config.
    config: PathBuf,
    /// Output path; overrides the config's `output_path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for this run.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (scheduling only; never changes results).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run all verification suites and print one PASS/FAIL line per suite.
    Verify(Common),
    /// Compute the fidelity/length trade-off grid and write it as CSV.
    Sweep(Common),
    /// Run seeded Monte Carlo rounds; write per-round CSV and a summary JSON.
    Simulate(Common),
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::InvalidParameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Verify(common) => {
            let cfg = ExperimentConfig::from_path(&common.config)?;
            let report = runner::run_verify(&cfg, common.seed)?;
            let text = report.to_string();
            match &common.out {
                Some(path) => std::fs::write(path, &text)?,
                None => print!("{text}"),
            }
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Sweep(common) => {
            let cfg = ExperimentConfig::from_path(&common.config)?;
            let out = output_path(&common, &cfg)?;
            let rows = runner::run_sweep(&cfg, common.seed, common.threads)?;
            runner::write_sweep_csv(&rows, &out)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(common) => {
            let cfg = ExperimentConfig::from_path(&common.config)?;
            let out = output_path(&common, &cfg)?;
            let artifacts = runner::run_simulate(&cfg, common.seed)?;
            std::fs::write(&out, &artifacts.rounds_csv)?;
            let summary_path = summary_path(&out);
            std::fs::write(&summary_path, &artifacts.summary_json)?;
            eprintln!(
                "wrote rounds to {} and summary to {}",
                out.display(),
                summary_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn output_path(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, Error> {
    common
        .out
        .clone()
        .or_else(|| cfg.output_path.clone())
        .ok_or_else(|| Error::Config("no output path: set `output_path` or pass --out".into()))
}

fn summary_path(rounds_path: &Path) -> PathBuf {
    let stem = rounds_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "simulate".into());
    rounds_path.with_file_name(format!("{stem}.summary.json"))
}
