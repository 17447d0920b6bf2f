mod config;
mod exact;
mod report;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use icea_core::datasets::{generate, write_csv, GeneratorSpec, Rule};

/// Distributed additive regression with a fusion center.
#[derive(Debug, Parser)]
#[command(name = "icea", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV plus provenance sidecar.
    GenData(GenDataArgs),
    /// Train ICEA or a baseline and write metrics and models.
    Train(config::TrainArgs),
    /// Run the exact Gaussian-polynomial engine and print the per-round table.
    ExactDemo(exact::ExactArgs),
    /// Summarize finished runs into comparison tables and curve files.
    Report(report::ReportArgs),
}

#[derive(Debug, clap::Args)]
struct GenDataArgs {
    /// friedman1, friedman2, friedman3 or product-xy
    #[arg(long)]
    rule: String,
    #[arg(long)]
    n: usize,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Map targets onto [0, 1] by their min/max.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Finished-run status mapped onto the process exit code.
pub enum Outcome {
    Converged,
    BudgetExhausted,
}

fn gen_data(args: GenDataArgs) -> Result<Outcome> {
    let Some(rule) = Rule::parse(&args.rule) else {
        bail!("unknown rule `{}`", args.rule);
    };
    let spec = GeneratorSpec { rule, n: args.n, noise_sd: args.noise, seed: args.seed, normalize_targets: args.normalize };
    let ds = generate(&spec)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_csv(&ds, &args.out)?;
    println!("wrote {} rows x {} features to {}", ds.n(), ds.m(), args.out.display());
    Ok(Outcome::Converged)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train::run(a),
        Command::ExactDemo(a) => exact::run(a),
        Command::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::BudgetExhausted) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
