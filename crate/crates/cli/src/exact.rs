use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use icea_core::exact_gauss::{
    int, log_surplus_slope, parse_rational, run_exact_to_limit, to_decimal, BivarPoly, ExactError, ExactRun,
    GaussPair, UniPoly, DEFAULT_MAX_ROUNDS,
};

use crate::Outcome;

#[derive(Debug, clap::Args)]
pub struct ExactArgs {
    /// Target polynomial in x1, x2.
    #[arg(long, default_value = "x1*x2^2 + x1^2 + 2")]
    phi: String,
    /// Correlation of (X1, X2), as p/q or a decimal.
    #[arg(long, default_value = "1/2", allow_hyphen_values = true)]
    rho: String,
    /// Stop once the error decrease is at most this.
    #[arg(long, default_value = "1/1000000000000")]
    eps: String,
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    rounds: usize,
    /// Rounds (1-based, inclusive) for the log-surplus slope fit.
    #[arg(long, default_value_t = 2)]
    slope_from: usize,
    #[arg(long, default_value_t = 8)]
    slope_to: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn decimals(p: &UniPoly, places: usize) -> String {
    let c = p.coeffs();
    if c.is_empty() {
        return to_decimal(&int(0), places);
    }
    c.iter().map(|v| to_decimal(v, places)).collect::<Vec<_>>().join(" ")
}

pub const EXACT_HEADER: &str = "round,g1_coeffs,g2_coeffs,error_exact,error_decimal,g1_decimal,g2_decimal,surplus_decimal";

/// One row per round. The surplus is measured against the last round's error.
pub fn table(run: &ExactRun) -> String {
    let limit = run.errors.last().cloned().unwrap_or_else(|| int(0));
    let mut out = String::from(EXACT_HEADER);
    out.push('\n');
    for (r, ((g1, g2), err)) in run.trajectory.iter().zip(&run.errors).enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r + 1,
            g1.to_text(),
            g2.to_text(),
            err,
            to_decimal(err, 10),
            decimals(g1, 4),
            decimals(g2, 4),
            to_decimal(&(err - &limit), 15)
        );
    }
    out
}

pub fn run(args: ExactArgs) -> Result<Outcome> {
    let phi: BivarPoly = args.phi.parse().with_context(|| format!("parsing phi `{}`", args.phi))?;
    let gp = GaussPair::new(parse_rational(&args.rho)?)?;
    let eps = parse_rational(&args.eps)?;
    let (run, outcome) = match run_exact_to_limit(&phi, &gp, &eps, args.rounds) {
        Ok(run) => (run, Outcome::Converged),
        Err(ExactError::NotConverged { run, rounds, last_decrease }) => {
            eprintln!("not converged after {rounds} rounds (last decrease {last_decrease})");
            (*run, Outcome::BudgetExhausted)
        }
        Err(e) => return Err(e.into()),
    };
    let csv = table(&run);
    let limit = run.errors.last().cloned().unwrap_or_else(|| int(0));
    let slope = log_surplus_slope(&run.errors, &limit, args.slope_from, args.slope_to);
    let slope_text = slope.map_or("n/a".into(), |k| format!("{k:.6}"));
    let summary = format!(
        "{} rounds, final error {} ({}), log-surplus slope over rounds {}-{}: {slope_text}",
        run.errors.len(),
        limit,
        to_decimal(&limit, 10),
        args.slope_from,
        args.slope_to
    );
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{summary}");
        }
        None => {
            print!("{csv}");
            eprintln!("{summary}");
        }
    }
    Ok(outcome)
}
