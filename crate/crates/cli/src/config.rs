//! Training configuration: flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use icea_core::datasets::{assignment_system, Rule};
use icea_core::orchestrator::{FeatureAssignment, RunOptions, Schedule, StopRule};
use icea_core::transport::CarrierKind;
use icea_core::weak_learner::TreeParams;
use serde::{Deserialize, Serialize};

/// Every field is optional so the file and the flags can be merged; flags win.
#[derive(Debug, Clone, Default, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// TOML file with any of the keys below (snake_case).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// icea, boost or hier
    #[arg(long)]
    pub algo: Option<String>,
    /// Dataset CSV (last column is the target). Mutually exclusive with --rule.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generate friedman1|friedman2|friedman3|product-xy instead of reading a file.
    #[arg(long)]
    pub rule: Option<String>,
    /// Rows generated before splitting; defaults to n_train + n_test.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Normalize targets to [0, 1] by the training min/max (default on for generated data).
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Defaults to 4000 for generated data and to the remaining rows for files.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Reference agent layout 1, 2 or 3.
    #[arg(long)]
    pub system: Option<u8>,
    /// Explicit agents as 0-based feature lists, e.g. "0,1;1,2;3,4".
    #[arg(long)]
    pub agents: Option<String>,
    /// Extra features `Σ c_j x_j`, e.g. "1,1;1,-1"; each becomes its own agent.
    #[arg(long)]
    pub virtual_features: Option<String>,
    /// round-robin, greedy or greedy-penalized
    #[arg(long)]
    pub schedule: Option<String>,
    /// Leaf penalty for greedy-penalized.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Treat --eps as an absolute MSE change instead of a fraction of the initial MSE.
    #[arg(long)]
    pub absolute_eps: Option<bool>,
    #[arg(long)]
    pub max_updates: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub min_gain: Option<f64>,
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// in-process or local-socket
    #[arg(long)]
    pub carrier: Option<String>,
    /// First loopback port for local-socket; 0 picks free ports.
    #[arg(long)]
    pub port_base: Option<u16>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! prefer_flags {
    ($flags:expr, $file:expr, $($field:ident),+) => {
        TrainArgs { config: $flags.config.clone(), $($field: $flags.$field.clone().or($file.$field.clone())),+ }
    };
}

impl TrainArgs {
    /// Fills unset flags from the config file, if one was given.
    pub fn merged(self) -> Result<TrainArgs> {
        let Some(path) = &self.config else { return Ok(self) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: TrainArgs = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let file = TrainArgs {
            data: file.data.map(|p| base.join(p)),
            out: file.out.map(|p| base.join(p)),
            ..file
        };
        Ok(prefer_flags!(
            self, file, algo, data, rule, n, noise, normalize, n_train, n_test, system, agents, virtual_features,
            schedule, lambda, eps, absolute_eps, max_updates, max_depth, min_leaf, min_gain, shrinkage, carrier,
            port_base, seed, out
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Icea,
    Boost,
    Hier,
}

impl Algo {
    fn parse(s: &str) -> Result<Algo> {
        match s.to_ascii_lowercase().as_str() {
            "icea" => Ok(Algo::Icea),
            "boost" | "l2" | "l2-boosting" => Ok(Algo::Boost),
            "hier" | "hierarchical" => Ok(Algo::Hier),
            _ => bail!("unknown algo `{s}`; expected icea, boost or hier"),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algo::Icea => "icea",
            Algo::Boost => "boost",
            Algo::Hier => "hier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    File(PathBuf),
    Generated { rule: Rule, n: usize, noise_sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentSpec {
    System(u8),
    Explicit(Vec<Vec<usize>>),
}

/// Fully resolved configuration, also written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algo: Algo,
    pub source: DataSource,
    pub normalize: bool,
    pub n_train: usize,
    pub n_test: Option<usize>,
    pub agents: AgentSpec,
    pub virtual_features: Vec<Vec<f64>>,
    pub options: RunOptions,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    /// Label for summaries: rule name or file stem.
    pub fn dataset_label(&self) -> String {
        match &self.source {
            DataSource::Generated { rule, .. } => rule.label().to_owned(),
            DataSource::File(p) => p.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn system_label(&self) -> String {
        match (&self.algo, &self.agents) {
            (Algo::Boost, _) => "all".into(),
            (_, AgentSpec::System(k)) => k.to_string(),
            (_, AgentSpec::Explicit(_)) => "custom".into(),
        }
    }

    /// Agent feature sets for data with `m` original features.
    pub fn assignment(&self, m: usize) -> Result<FeatureAssignment> {
        let mut sets = match &self.agents {
            AgentSpec::System(k) => assignment_system(*k)?.sets().to_vec(),
            AgentSpec::Explicit(sets) => sets.clone(),
        };
        sets.extend((0..self.virtual_features.len()).map(|k| vec![m + k]));
        Ok(FeatureAssignment::new(sets, m + self.virtual_features.len())?)
    }
}

fn parse_lists<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<Vec<T>>> {
    s.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|v| v.trim().parse::<T>().map_err(|_| anyhow!("bad {what} entry `{}`", v.trim())))
                .collect()
        })
        .collect()
}

fn parse_schedule(name: &str, lambda: Option<f64>) -> Result<Schedule> {
    match name.to_ascii_lowercase().replace('_', "-").as_str() {
        "round-robin" | "roundrobin" | "rr" => Ok(Schedule::RoundRobin),
        "greedy" => Ok(Schedule::Greedy),
        "greedy-penalized" | "penalized" => Ok(Schedule::GreedyPenalized { lambda: lambda.unwrap_or(0.0) }),
        _ => bail!("unknown schedule `{name}`"),
    }
}

impl TryFrom<TrainArgs> for RunConfig {
    type Error = anyhow::Error;

    fn try_from(a: TrainArgs) -> Result<RunConfig> {
        let algo = Algo::parse(a.algo.as_deref().unwrap_or("icea"))?;
        let n_train = a.n_train.unwrap_or(2000);
        let (source, n_test, default_norm) = match (&a.data, &a.rule) {
            (Some(_), Some(_)) => bail!("give either --data or --rule, not both"),
            (None, None) => bail!("no dataset: give --data <csv> or --rule <name>"),
            (Some(path), None) => {
                if !path.exists() {
                    bail!("dataset {} does not exist", path.display());
                }
                (DataSource::File(path.clone()), a.n_test, false)
            }
            (None, Some(name)) => {
                let rule = Rule::parse(name).ok_or_else(|| anyhow!("unknown rule `{name}`"))?;
                let n_test = a.n_test.unwrap_or(4000);
                let n = a.n.unwrap_or(n_train + n_test);
                let noise_sd = a.noise.unwrap_or(0.0);
                (DataSource::Generated { rule, n, noise_sd }, Some(n_test), true)
            }
        };
        let agents = match (a.system, &a.agents) {
            (Some(_), Some(_)) => bail!("give either --system or --agents, not both"),
            (Some(k), None) => AgentSpec::System(k),
            (None, Some(s)) => AgentSpec::Explicit(parse_lists(s, "feature index")?),
            (None, None) if algo == Algo::Boost => AgentSpec::System(1),
            (None, None) => bail!("no agents: give --system <1|2|3> or --agents"),
        };
        let virtual_features = match &a.virtual_features {
            Some(s) => parse_lists(s, "coefficient")?,
            None => Vec::new(),
        };
        let defaults = RunOptions::default();
        let options = RunOptions {
            schedule: parse_schedule(a.schedule.as_deref().unwrap_or("round-robin"), a.lambda)?,
            stop: StopRule {
                eps: a.eps.unwrap_or(defaults.stop.eps),
                max_updates: a.max_updates.unwrap_or(defaults.stop.max_updates),
                relative: !a.absolute_eps.unwrap_or(false),
            },
            params: TreeParams {
                max_depth: a.max_depth.unwrap_or(defaults.params.max_depth),
                min_samples_leaf: a.min_leaf.unwrap_or(defaults.params.min_samples_leaf),
                min_gain: a.min_gain.unwrap_or(defaults.params.min_gain),
            },
            carrier: {
                let name = a.carrier.as_deref().unwrap_or("in-process");
                CarrierKind::parse(name, a.port_base.unwrap_or(0)).ok_or_else(|| anyhow!("unknown carrier `{name}`"))?
            },
            shrinkage: a.shrinkage.unwrap_or(1.0),
        };
        options.validate()?;
        Ok(RunConfig {
            algo,
            source,
            normalize: a.normalize.unwrap_or(default_norm),
            n_train,
            n_test,
            agents,
            virtual_features,
            options,
            seed: a.seed.unwrap_or(0),
            out: a.out.unwrap_or_else(|| PathBuf::from("icea-run")),
        })
    }
}
