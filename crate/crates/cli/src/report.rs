use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use icea_core::orchestrator::RunMetrics;

use crate::train::RunSummary;
use crate::Outcome;

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Run directories written by `icea train`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for summary.csv, table.csv, invariants.csv and curves/.
    #[arg(long)]
    out: PathBuf,
}

pub const SUMMARY_HEADER: [&str; 7] = ["dataset", "system", "algo", "train_mse", "test_mse", "updates", "leaves_total"];

struct Loaded {
    name: String,
    summary: RunSummary,
    metrics: RunMetrics,
}

fn load(dir: &Path) -> Result<Loaded> {
    let read = |file: &str| {
        let p = dir.join(file);
        fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    };
    let summary: RunSummary =
        serde_json::from_str(&read("run.json")?).with_context(|| format!("corrupt {}", dir.join("run.json").display()))?;
    let metrics = RunMetrics::from_csv(&read("metrics.csv")?)
        .with_context(|| format!("corrupt {}", dir.join("metrics.csv").display()))?;
    if metrics.rows.len() != summary.updates {
        bail!("{}: metrics has {} rows but run.json reports {} updates", dir.display(), metrics.rows.len(), summary.updates);
    }
    let name = format!("{}_s{}_{}", summary.dataset, summary.system, summary.algo);
    Ok(Loaded { name, summary, metrics })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn run(args: ReportArgs) -> Result<Outcome> {
    let runs = args.runs.iter().map(|d| load(d)).collect::<Result<Vec<_>>>()?;
    let curves = args.out.join("curves");
    fs::create_dir_all(&curves).with_context(|| format!("creating {}", curves.display()))?;

    let mut summary = csv::Writer::from_path(args.out.join("summary.csv"))?;
    summary.write_record(SUMMARY_HEADER)?;
    let mut invariants = csv::Writer::from_path(args.out.join("invariants.csv"))?;
    invariants.write_record(["run", "monotone_train_mse", "violations", "memory_audit", "test_reads_during_training"])?;
    let mut table: BTreeMap<(String, String), BTreeMap<String, Option<f64>>> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut used = BTreeMap::new();

    for r in &runs {
        let s = &r.summary;
        summary.write_record([
            s.dataset.clone(),
            s.system.clone(),
            s.algo.clone(),
            s.train_mse.to_string(),
            opt(s.test_mse),
            s.updates.to_string(),
            s.leaves_total.to_string(),
        ])?;
        table.entry((s.dataset.clone(), s.system.clone())).or_default().insert(s.algo.clone(), s.test_mse);

        let violations = r.metrics.monotonicity_violations();
        let ok = violations.is_empty() && s.memory_audit_pass && s.test_reads_during_training == 0;
        if !ok {
            failures.push(r.name.clone());
        }
        invariants.write_record([
            r.name.clone(),
            violations.is_empty().to_string(),
            violations.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" "),
            if s.memory_audit_pass { "pass" } else { "fail" }.to_string(),
            s.test_reads_during_training.to_string(),
        ])?;

        let count = used.entry(r.name.clone()).or_insert(0);
        *count += 1;
        let file = if *count == 1 { format!("{}.csv", r.name) } else { format!("{}_{}.csv", r.name, count) };
        let mut curve = csv::Writer::from_path(curves.join(file))?;
        curve.write_record(["update", "round", "agent", "train_mse", "test_mse"])?;
        for row in &r.metrics.rows {
            curve.write_record([
                row.update.to_string(),
                row.round.to_string(),
                row.agent.to_string(),
                row.train_mse.to_string(),
                opt(row.test_mse),
            ])?;
        }
        curve.flush()?;
    }
    summary.flush()?;
    invariants.flush()?;

    let algos: Vec<String> = {
        let mut a: Vec<String> = runs.iter().map(|r| r.summary.algo.clone()).collect();
        a.sort();
        a.dedup();
        a
    };
    let mut t = csv::Writer::from_path(args.out.join("table.csv"))?;
    let mut header = vec!["dataset".to_string(), "system".to_string()];
    header.extend(algos.iter().cloned());
    t.write_record(&header)?;
    // Runs over all features (boost) have no system; repeat them on every system row of their dataset.
    let shared: BTreeMap<(String, String), Option<f64>> = runs
        .iter()
        .filter(|r| r.summary.system == "all")
        .map(|r| ((r.summary.dataset.clone(), r.summary.algo.clone()), r.summary.test_mse))
        .collect();
    let has_systems = |d: &str| table.keys().any(|(ds, sys)| ds == d && sys != "all");
    for ((dataset, system), cells) in &table {
        if system == "all" && has_systems(dataset) {
            continue;
        }
        let mut rec = vec![dataset.clone(), system.clone()];
        rec.extend(algos.iter().map(|a| {
            let v = cells.get(a).copied().flatten().or_else(|| shared.get(&(dataset.clone(), a.clone())).copied().flatten());
            v.map(|v| v.to_string()).unwrap_or_default()
        }));
        t.write_record(&rec)?;
    }
    t.flush()?;

    println!("{} runs summarized into {}", runs.len(), args.out.display());
    if !failures.is_empty() {
        bail!("invariant failure in {}", failures.join(", "));
    }
    Ok(Outcome::Converged)
}
