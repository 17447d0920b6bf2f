use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use icea_core::datasets::{generate, normalize_by_train, read_csv, split, virtual_features, Dataset, GeneratorSpec};
use icea_core::orchestrator::{run_hierarchical, run_icea, run_l2_boosting, IceaRun, RunMetrics};
use serde::{Deserialize, Serialize};

use crate::config::{Algo, DataSource, RunConfig, TrainArgs};
use crate::Outcome;

/// `run.json`, read back by `icea report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub system: String,
    pub algo: String,
    pub converged: bool,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub updates: usize,
    pub leaves_total: usize,
    pub messages: usize,
    pub fusion_peak_slots: usize,
    pub memory_audit_pass: bool,
    pub test_reads_during_training: usize,
    pub warnings: Vec<String>,
    pub config: RunConfig,
}

fn load(cfg: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    let ds = match &cfg.source {
        DataSource::File(path) => read_csv(path)?,
        DataSource::Generated { rule, n, noise_sd } => generate(&GeneratorSpec {
            rule: *rule,
            n: *n,
            noise_sd: *noise_sd,
            seed: cfg.seed,
            normalize_targets: false,
        })?,
    };
    let n_test = cfg.n_test.unwrap_or(ds.n().saturating_sub(cfg.n_train));
    let (train, test) = split(&ds, cfg.n_train, n_test, cfg.seed)?;
    let (train, test) = if cfg.normalize {
        let (tr, te, _) = normalize_by_train(train, test);
        (tr, te)
    } else {
        (train, test)
    };
    let test = (test.n() > 0).then_some(test);
    if cfg.virtual_features.is_empty() {
        return Ok((train, test));
    }
    let train = virtual_features(&train, &cfg.virtual_features)?;
    let test = test.map(|t| virtual_features(&t, &cfg.virtual_features)).transpose()?;
    Ok((train, test))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn summarize(cfg: &RunConfig, run: &IceaRun, metrics: &RunMetrics, converged: bool) -> RunSummary {
    RunSummary {
        dataset: cfg.dataset_label(),
        system: cfg.system_label(),
        algo: cfg.algo.label().into(),
        converged,
        train_mse: metrics.final_train_mse(),
        test_mse: metrics.final_test_mse(),
        updates: metrics.rows.len(),
        leaves_total: metrics.total_leaves(),
        messages: metrics.total_messages(),
        fusion_peak_slots: run.audit.fusion_peak(),
        memory_audit_pass: run.audit.pass(),
        test_reads_during_training: run.test_reads_during_training,
        warnings: run.warnings.clone(),
        config: cfg.clone(),
    }
}

pub fn run(args: TrainArgs) -> Result<Outcome> {
    let cfg = RunConfig::try_from(args.merged()?)?;
    let (train, test) = load(&cfg)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let out = &cfg.out;
    let m = train.m() - cfg.virtual_features.len();

    let summary = match cfg.algo {
        Algo::Icea | Algo::Boost => {
            let run = if cfg.algo == Algo::Icea {
                run_icea(&train, test.as_ref(), &cfg.assignment(m)?, &cfg.options)?
            } else {
                run_l2_boosting(&train, test.as_ref(), &cfg.options)?
            };
            run.metrics.write_csv(&out.join("metrics.csv"))?;
            json(&out.join("models.json"), &run.models)?;
            summarize(&cfg, &run, &run.metrics, run.converged)
        }
        Algo::Hier => {
            let run = run_hierarchical(&train, test.as_ref(), &cfg.assignment(m)?, &cfg.options)?;
            run.stage2.metrics.write_csv(&out.join("metrics.csv"))?;
            for (j, s) in run.stage1.iter().enumerate() {
                s.metrics.write_csv(&out.join(format!("stage1_agent{j}_metrics.csv")))?;
            }
            json(&out.join("models.json"), &run.model)?;
            summarize(&cfg, &run.stage2, &run.stage2.metrics, run.converged())
        }
    };
    json(&out.join("run.json"), &summary)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    let test = summary.test_mse.map_or("-".into(), |v| format!("{v:.6}"));
    println!(
        "{} {} system {}: {} updates, train MSE {:.6}, test MSE {test}, {}",
        summary.algo,
        summary.dataset,
        summary.system,
        summary.updates,
        summary.train_mse,
        if summary.converged { "converged" } else { "update budget exhausted" }
    );
    Ok(if summary.converged { Outcome::Converged } else { Outcome::BudgetExhausted })
}
