//! Single-agent L2 boosting and the non-cooperative two-stage scheme.

use serde::{Deserialize, Serialize};

use super::{predict_ensemble, run_icea, AgentModel, FeatureAssignment, IceaRun, OrchestratorError, RunOptions, Schedule};
use crate::datasets::Dataset;

/// One agent holding every feature; otherwise the ICEA loop unchanged.
pub fn run_l2_boosting(train: &Dataset, test: Option<&Dataset>, opts: &RunOptions) -> Result<IceaRun, OrchestratorError> {
    let assign = FeatureAssignment::single(train.m())?;
    let opts = RunOptions { schedule: Schedule::RoundRobin, ..opts.clone() };
    run_icea(train, test, &assign, &opts)
}

/// Stage-1 agent models composed with a stage-2 booster over their outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalModel {
    pub agents: Vec<AgentModel>,
    /// Reads column `j` as agent `j`'s stage-1 prediction.
    pub fusion: AgentModel,
}

impl HierarchicalModel {
    /// Stage-1 outputs as a dataset with one column per agent.
    pub fn stage1_features(&self, data: &Dataset) -> Result<Dataset, OrchestratorError> {
        let columns = self
            .agents
            .iter()
            .map(|a| predict_ensemble(std::slice::from_ref(a), data))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset::from_columns(columns, data.targets.clone())?)
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>, OrchestratorError> {
        let stage1 = self.stage1_features(data)?;
        predict_ensemble(std::slice::from_ref(&self.fusion), &stage1)
    }
}

#[derive(Debug, Clone)]
pub struct HierarchicalRun {
    pub model: HierarchicalModel,
    /// One single-agent run per feature set.
    pub stage1: Vec<IceaRun>,
    /// The fusion-center booster; its metrics are the run's metrics.
    pub stage2: IceaRun,
}

impl HierarchicalRun {
    pub fn converged(&self) -> bool {
        self.stage2.converged && self.stage1.iter().all(|r| r.converged)
    }
}

/// Every agent boosts `y` on its own features with `max_updates / D` updates,
/// then the fusion center boosts `y` on the `D` stage-1 predictions with the
/// same budget.
pub fn run_hierarchical(
    train: &Dataset,
    test: Option<&Dataset>,
    assign: &FeatureAssignment,
    opts: &RunOptions,
) -> Result<HierarchicalRun, OrchestratorError> {
    opts.validate()?;
    let d = assign.n_agents();
    let mut reduced = opts.clone();
    reduced.schedule = Schedule::RoundRobin;
    reduced.stop.max_updates = (opts.stop.max_updates / d).max(1);

    let mut stage1 = Vec::with_capacity(d);
    let mut agents = Vec::with_capacity(d);
    for (j, set) in assign.sets().iter().enumerate() {
        let own = FeatureAssignment::new(vec![set.clone()], assign.n_features())?;
        let run = run_icea(train, test, &own, &reduced)?;
        let mut model = run.models[0].clone();
        model.agent = j;
        agents.push(model);
        stage1.push(run);
    }
    let partial = HierarchicalModel { agents, fusion: AgentModel::new(0, (0..d).collect()) };
    let train2 = partial.stage1_features(train)?;
    let test2 = test.map(|t| partial.stage1_features(t)).transpose()?;
    let stage2 = run_icea(&train2, test2.as_ref(), &FeatureAssignment::single(d)?, &reduced)?;
    let model = HierarchicalModel { fusion: stage2.models[0].clone(), ..partial };
    Ok(HierarchicalRun { model, stage1, stage2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::StopRule;
    use crate::weak_learner::TreeParams;

    fn data(n: usize) -> Dataset {
        let a: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 5) % 13) as f64 / 13.0).collect();
        let y = a.iter().zip(&b).map(|(a, b)| (3.0 * a).sin() + b * b).collect();
        Dataset::from_columns(vec![a, b], y).unwrap()
    }

    fn opts() -> RunOptions {
        RunOptions {
            params: TreeParams { max_depth: 3, min_samples_leaf: 2, min_gain: 0.0 },
            stop: StopRule::absolute(1e-10, 60),
            ..Default::default()
        }
    }

    #[test]
    fn boosting_is_single_agent_icea() {
        let ds = data(143);
        let a = run_l2_boosting(&ds, None, &opts()).unwrap();
        let b = run_icea(&ds, None, &FeatureAssignment::single(2).unwrap(), &opts()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.models, b.models);
    }

    #[test]
    fn constant_target_converges_at_once() {
        let ds = Dataset::from_columns(vec![vec![0.0, 1.0, 2.0]], vec![-1.5; 3]).unwrap();
        let run = run_l2_boosting(&ds, None, &opts()).unwrap();
        assert!(run.converged);
        assert_eq!(run.metrics.rows.len(), 1);
        assert_eq!(run.metrics.final_train_mse(), 0.0);
    }

    #[test]
    fn hierarchical_composes_stages() {
        let ds = data(143);
        let assign = FeatureAssignment::new(vec![vec![0], vec![1]], 2).unwrap();
        let run = run_hierarchical(&ds, Some(&ds), &assign, &opts()).unwrap();
        assert_eq!(run.stage1.len(), 2);
        assert!(run.stage1.iter().all(|r| r.metrics.rows.len() <= 30));
        let pred = run.model.predict(&ds).unwrap();
        let mse = ds.targets.iter().zip(&pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / ds.n() as f64;
        assert!((mse - run.stage2.metrics.final_train_mse()).abs() < 1e-9);
        assert!(run.stage2.metrics.is_monotone());
    }

    #[test]
    fn cooperation_beats_isolation_on_additive_target() {
        let ds = data(143);
        let assign = FeatureAssignment::new(vec![vec![0], vec![1]], 2).unwrap();
        let icea = run_icea(&ds, None, &assign, &opts()).unwrap();
        let hier = run_hierarchical(&ds, None, &assign, &opts()).unwrap();
        assert!(icea.metrics.final_train_mse() < hier.stage2.metrics.final_train_mse());
    }
}
