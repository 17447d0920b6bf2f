//! The ICEA training loop: residual bookkeeping at the fusion center, agent
//! scheduling, stopping, and ensemble prediction. Baselines live in
//! [`baselines`].

mod baselines;
mod metrics;
mod schedule;

use std::cell::Cell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{run_hierarchical, run_l2_boosting, HierarchicalModel, HierarchicalRun};
pub use metrics::{MetricsRow, RunMetrics, METRICS_HEADER};
pub use schedule::{select_agent, CandidateFit, Schedule, ScheduleState};

use crate::datasets::{DataError, Dataset};
use crate::transport::{audit_memory, AgentNode, AuditReport, CarrierKind, MemoryLedger, Party, Transport, TransportError};
use crate::weak_learner::{RegressionTree, TreeError, TreeParams};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("assignment has no agents")]
    EmptyAssignment,
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
    #[error("non-finite residual after update {update}")]
    NonFinite { update: usize },
    #[error("metrics: {0}")]
    Metrics(String),
}

/// The feature sets `F_j`, one per agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureAssignment {
    sets: Vec<Vec<usize>>,
    n_features: usize,
}

impl FeatureAssignment {
    /// `sets[j]` lists the feature indices agent `j` may read out of
    /// `n_features`. Sets may overlap; duplicates inside a set are dropped.
    pub fn new(sets: Vec<Vec<usize>>, n_features: usize) -> Result<Self, OrchestratorError> {
        if sets.is_empty() {
            return Err(OrchestratorError::EmptyAssignment);
        }
        let mut clean = Vec::with_capacity(sets.len());
        for (j, set) in sets.into_iter().enumerate() {
            if set.is_empty() {
                return Err(OrchestratorError::InvalidAssignment(format!("agent {j} has no features")));
            }
            if let Some(&f) = set.iter().find(|&&f| f >= n_features) {
                return Err(OrchestratorError::InvalidAssignment(format!(
                    "agent {j} references feature {f} but there are only {n_features}"
                )));
            }
            let mut seen = Vec::with_capacity(set.len());
            for f in set {
                if !seen.contains(&f) {
                    seen.push(f);
                }
            }
            clean.push(seen);
        }
        Ok(FeatureAssignment { sets: clean, n_features })
    }

    /// Every agent sees every feature.
    pub fn single(n_features: usize) -> Result<Self, OrchestratorError> {
        Self::new(vec![(0..n_features).collect()], n_features)
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn n_agents(&self) -> usize {
        self.sets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Features no agent can see.
    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.n_features).filter(|f| !self.sets.iter().any(|s| s.contains(f))).collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        let missing = self.uncovered();
        if missing.is_empty() {
            Vec::new()
        } else {
            vec![format!("features {missing:?} are not assigned to any agent")]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTree {
    pub tree: RegressionTree,
    /// 1-based round in which the tree was added.
    pub round: usize,
    /// 1-based global update index.
    pub update: usize,
}

/// One agent's additive component `g_j`, evaluated on its local features only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    pub agent: usize,
    pub features: Vec<usize>,
    pub trees: Vec<FittedTree>,
}

impl AgentModel {
    pub fn new(agent: usize, features: Vec<usize>) -> Self {
        AgentModel { agent, features, trees: Vec::new() }
    }

    /// `g_j` at one full feature row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.tree.predict_unchecked(|f| row[self.features[f]])).sum()
    }

    fn check_width(&self, m: usize) -> Result<(), OrchestratorError> {
        match self.features.iter().find(|&&f| f >= m) {
            Some(&f) => Err(OrchestratorError::InvalidAssignment(format!(
                "agent {} needs feature {f} but rows have {m}",
                self.agent
            ))),
            None => Ok(()),
        }
    }
}

/// `Σ_j g_j(x_{F_j})` for every row of `data`.
pub fn predict_ensemble(models: &[AgentModel], data: &Dataset) -> Result<Vec<f64>, OrchestratorError> {
    for m in models {
        m.check_width(data.m())?;
    }
    let mut out = vec![0.0; data.n()];
    for m in models {
        for t in &m.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += t.tree.predict_unchecked(|f| data.columns[m.features[f]][i]);
            }
        }
    }
    Ok(out)
}

/// Stop once the training MSE moves by at most `eps` over a round, or after
/// `max_updates` agent updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub eps: f64,
    pub max_updates: usize,
    /// When set, `eps` is a fraction of the initial training MSE.
    #[serde(default)]
    pub relative: bool,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { eps: 1e-6, max_updates: 500, relative: true }
    }
}

impl StopRule {
    pub fn absolute(eps: f64, max_updates: usize) -> Self {
        StopRule { eps, max_updates, relative: false }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(OrchestratorError::InvalidOptions(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_updates == 0 {
            return Err(OrchestratorError::InvalidOptions("max_updates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn threshold(&self, initial_mse: f64) -> f64 {
        if self.relative {
            self.eps * initial_mse
        } else {
            self.eps
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub schedule: Schedule,
    pub stop: StopRule,
    pub params: TreeParams,
    pub carrier: CarrierKind,
    /// Multiplier on every fitted tree. 1 is plain backfitting.
    pub shrinkage: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            schedule: Schedule::RoundRobin,
            stop: StopRule::default(),
            params: TreeParams::default(),
            carrier: CarrierKind::InProcess,
            shrinkage: 1.0,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        self.schedule.validate().map_err(OrchestratorError::InvalidOptions)?;
        self.stop.validate()?;
        self.params.validate()?;
        if !(self.shrinkage > 0.0 && self.shrinkage.is_finite()) {
            return Err(OrchestratorError::InvalidOptions(format!(
                "shrinkage must be positive, got {}",
                self.shrinkage
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IceaRun {
    pub models: Vec<AgentModel>,
    pub metrics: RunMetrics,
    /// False when the update budget ran out first.
    pub converged: bool,
    /// Final fusion-center residual `z`.
    pub residual: Vec<f64>,
    pub audit: AuditReport,
    /// Test predictions gathered from the agents after training.
    pub test_predictions: Option<Vec<f64>>,
    /// Times the test targets were read before training finished. Always 0.
    pub test_reads_during_training: usize,
    pub warnings: Vec<String>,
}

/// Test data whose targets are only reachable through a counted accessor.
struct Withheld<'a> {
    data: &'a Dataset,
    reads: Cell<usize>,
}

impl<'a> Withheld<'a> {
    fn targets(&self) -> &'a [f64] {
        self.reads.set(self.reads.get() + 1);
        &self.data.targets
    }
}

fn mse(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64
}

fn all_equal(z: &[f64]) -> bool {
    z.windows(2).all(|w| w[0] == w[1])
}

struct Fusion<'a> {
    transport: Transport,
    ledger: Arc<MemoryLedger>,
    z: Vec<f64>,
    train_mse: f64,
    models: Vec<AgentModel>,
    rows: Vec<MetricsRow>,
    update: usize,
    round: usize,
    opts: &'a RunOptions,
}

impl Fusion<'_> {
    fn n(&self) -> usize {
        self.z.len()
    }

    /// Subtracts an agent's training predictions from `z`.
    fn apply(&mut self, agent: usize, tree: RegressionTree, delta: Vec<f64>, leaves: usize, before: crate::transport::Traffic) -> Result<(), OrchestratorError> {
        self.ledger.alloc(Party::Fusion, "scratch", self.n());
        if delta.len() != self.z.len() {
            return Err(TransportError::Protocol(format!(
                "agent {agent} returned {} predictions for {} rows",
                delta.len(),
                self.z.len()
            ))
            .into());
        }
        for (z, d) in self.z.iter_mut().zip(&delta) {
            *z -= d;
        }
        drop(delta);
        self.ledger.free(Party::Fusion, "scratch");
        self.update += 1;
        if self.z.iter().any(|v| !v.is_finite()) {
            return Err(OrchestratorError::NonFinite { update: self.update });
        }
        self.train_mse = mse(&self.z);
        let after = self.transport.traffic();
        self.rows.push(MetricsRow {
            update: self.update,
            round: self.round,
            agent,
            train_mse: self.train_mse,
            test_mse: None,
            leaves,
            messages: after.messages - before.messages,
            scalars_sent: after.scalars - before.scalars,
        });
        self.models[agent].trees.push(FittedTree { tree, round: self.round, update: self.update });
        Ok(())
    }

    fn fit_and_apply(&mut self, agent: usize) -> Result<(), OrchestratorError> {
        let before = self.transport.traffic();
        let reply = self.transport.fit(agent, &self.z, true)?;
        self.apply(agent, reply.summary, reply.delta, reply.leaves, before)
    }

    /// One greedy step: every agent proposes, the best one commits.
    fn greedy_step(&mut self) -> Result<(), OrchestratorError> {
        let before = self.transport.traffic();
        let d = self.transport.n_agents();
        let mut candidates = Vec::with_capacity(d);
        let mut summaries = Vec::with_capacity(d);
        for j in 0..d {
            let reply = self.transport.fit(j, &self.z, false)?;
            self.ledger.alloc(Party::Fusion, "scratch", self.n());
            let sse: f64 = self.z.iter().zip(&reply.delta).map(|(z, p)| (z - p) * (z - p)).sum();
            self.ledger.free(Party::Fusion, "scratch");
            candidates.push(CandidateFit { sse, leaves: reply.leaves });
            summaries.push(Some((reply.summary, reply.leaves)));
        }
        let state = ScheduleState { n_agents: d, last: self.rows.last().map(|r| r.agent) };
        let j = select_agent(&self.opts.schedule, &state, &candidates);
        let delta = self.transport.commit(j)?;
        let (tree, leaves) = summaries[j].take().expect("candidate present");
        self.apply(j, tree, delta, leaves, before)
    }
}

/// Trains an additive model with one agent per feature set. Test data, when
/// given, is only scored after training.
pub fn run_icea(
    train: &Dataset,
    test: Option<&Dataset>,
    assign: &FeatureAssignment,
    opts: &RunOptions,
) -> Result<IceaRun, OrchestratorError> {
    opts.validate()?;
    train.validate()?;
    if assign.n_agents() == 0 {
        return Err(OrchestratorError::EmptyAssignment);
    }
    let m = train.m();
    for (j, set) in assign.sets().iter().enumerate() {
        if let Some(&f) = set.iter().find(|&&f| f >= m) {
            return Err(OrchestratorError::InvalidAssignment(format!(
                "agent {j} references feature {f} but training data has {m}"
            )));
        }
    }
    if let Some(t) = test {
        t.validate()?;
        if t.m() != m {
            return Err(DataError::Shape(format!("test has {} features, train has {m}", t.m())).into());
        }
    }
    let mut warnings = assign.warnings();
    if assign.n_features() != m {
        warnings.push(format!("assignment declares {} features, data has {m}", assign.n_features()));
    }
    let withheld = test.map(|data| Withheld { data, reads: Cell::new(0) });

    let n = train.n();
    let ledger = Arc::new(MemoryLedger::new());
    let nodes = assign
        .sets()
        .iter()
        .enumerate()
        .map(|(j, set)| {
            AgentNode::new(j, train.select_columns(set), opts.params)
                .with_shrinkage(opts.shrinkage)
                .with_ledger(ledger.clone())
        })
        .collect();
    let transport = Transport::start(opts.carrier, nodes)?;
    ledger.alloc(Party::Fusion, "residual", n);
    let z = train.targets.clone();
    let initial = mse(&z);
    let mut fusion = Fusion {
        transport,
        ledger: ledger.clone(),
        train_mse: initial,
        z,
        models: assign.sets().iter().enumerate().map(|(j, s)| AgentModel::new(j, s.clone())).collect(),
        rows: Vec::new(),
        update: 0,
        round: 0,
        opts,
    };
    let eps = opts.stop.threshold(initial);
    let max = opts.stop.max_updates;
    let d = assign.n_agents();
    let greedy = opts.schedule.is_greedy() && d > 1;
    let mut converged = false;

    'outer: while fusion.update < max {
        fusion.round += 1;
        let start = fusion.train_mse;
        if greedy {
            let degenerate = all_equal(&fusion.z);
            fusion.greedy_step()?;
            if degenerate || (start - fusion.train_mse).abs() <= eps {
                converged = true;
                break;
            }
        } else {
            for j in 0..d {
                if fusion.update == max {
                    break 'outer;
                }
                let degenerate = all_equal(&fusion.z);
                fusion.fit_and_apply(j)?;
                if degenerate {
                    converged = true;
                    break 'outer;
                }
            }
            if (start - fusion.train_mse).abs() <= eps {
                converged = true;
                break;
            }
        }
    }

    let test_reads_during_training = withheld.as_ref().map_or(0, |w| w.reads.get());
    let mut test_predictions = None;
    if let Some(w) = &withheld {
        test_predictions = Some(fan_out_predict(&mut fusion.transport, assign, w.data)?);
    }
    fusion.transport.shutdown()?;
    let dims: Vec<usize> = assign.sets().iter().map(Vec::len).collect();
    let audit = audit_memory(&ledger, n, &dims);

    let mut metrics = RunMetrics { initial_train_mse: initial, rows: fusion.rows };
    if let Some(w) = &withheld {
        score_test(&mut metrics, &fusion.models, w.data, w.targets());
    }
    Ok(IceaRun {
        models: fusion.models,
        metrics,
        converged,
        residual: fusion.z,
        audit,
        test_predictions,
        test_reads_during_training,
        warnings,
    })
}

/// Asks every agent for `g_j` on its slice of `data` and sums the answers.
fn fan_out_predict(transport: &mut Transport, assign: &FeatureAssignment, data: &Dataset) -> Result<Vec<f64>, OrchestratorError> {
    let mut out = vec![0.0; data.n()];
    for (j, set) in assign.sets().iter().enumerate() {
        let rows = (0..data.n()).map(|i| set.iter().map(|&f| data.columns[f][i]).collect()).collect();
        for (o, v) in out.iter_mut().zip(transport.predict(j, rows)?) {
            *o += v;
        }
    }
    Ok(out)
}

/// Fills `test_mse` by replaying the trees in update order.
fn score_test(metrics: &mut RunMetrics, models: &[AgentModel], data: &Dataset, targets: &[f64]) {
    let mut order: Vec<(usize, &AgentModel, &RegressionTree)> =
        models.iter().flat_map(|m| m.trees.iter().map(move |t| (t.update, m, &t.tree))).collect();
    order.sort_by_key(|(u, _, _)| *u);
    let mut pred = vec![0.0; data.n()];
    for ((_, m, tree), row) in order.into_iter().zip(metrics.rows.iter_mut()) {
        for (i, p) in pred.iter_mut().enumerate() {
            *p += tree.predict_unchecked(|f| data.columns[m.features[f]][i]);
        }
        let err = targets.iter().zip(&pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / data.n() as f64;
        row.test_mse = Some(err);
    }
}
