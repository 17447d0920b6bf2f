//! Agent side of the protocol: owns its feature columns and accumulated trees.

use std::sync::Arc;

use super::ledger::{MemoryLedger, Party};
use super::message::Message;
use crate::weak_learner::{fit_tree, RegressionTree, TreeParams};

#[derive(Debug)]
pub struct AgentNode {
    id: usize,
    columns: Vec<Vec<f64>>,
    n: usize,
    params: TreeParams,
    shrinkage: f64,
    trees: Vec<RegressionTree>,
    pending: Option<RegressionTree>,
    ledger: Option<Arc<MemoryLedger>>,
}

impl AgentNode {
    /// `columns` are the agent's own training columns (column-major, equal lengths).
    pub fn new(id: usize, columns: Vec<Vec<f64>>, params: TreeParams) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        AgentNode { id, columns, n, params, shrinkage: 1.0, trees: Vec::new(), pending: None, ledger: None }
    }

    pub fn with_shrinkage(mut self, shrinkage: f64) -> Self {
        self.shrinkage = shrinkage;
        self
    }

    pub fn with_ledger(mut self, ledger: Arc<MemoryLedger>) -> Self {
        ledger.alloc(Party::Agent(self.id), "columns", self.columns.len() * self.n);
        self.ledger = Some(ledger);
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    fn account(&self, label: &str, slots: usize) {
        if let Some(l) = &self.ledger {
            l.alloc(Party::Agent(self.id), label, slots);
        }
    }

    fn release(&self, label: &str) {
        if let Some(l) = &self.ledger {
            l.free(Party::Agent(self.id), label);
        }
    }

    fn training_predictions(&self, tree: &RegressionTree) -> Vec<f64> {
        self.account("scratch", self.n);
        let cols = &self.columns;
        (0..self.n).map(|i| tree.predict_unchecked(|f| cols[f][i])).collect()
    }

    /// Handles one request. Returns `None` for [`Message::Shutdown`].
    pub fn handle(&mut self, msg: Message) -> Option<Message> {
        let reply = match msg {
            Message::FitRequest { run_id, residual, commit } => {
                if residual.len() != self.n {
                    return Some(Message::Error {
                        run_id,
                        message: format!("residual has {} values, agent holds {} rows", residual.len(), self.n),
                    });
                }
                self.account("residual", self.n);
                let fitted = fit_tree(&self.columns, &residual, &self.params);
                drop(residual);
                self.release("residual");
                match fitted {
                    Ok(tree) => {
                        let tree = if self.shrinkage == 1.0 { tree } else { tree.scaled(self.shrinkage) };
                        let delta_predictions = self.training_predictions(&tree);
                        let leaves = tree.size();
                        if commit {
                            self.trees.push(tree.clone());
                            self.pending = None;
                        } else {
                            self.pending = Some(tree.clone());
                        }
                        Message::FitResponse { run_id, delta_predictions, model_summary: tree, leaves }
                    }
                    Err(e) => Message::Error { run_id, message: e.to_string() },
                }
            }
            Message::Commit { run_id } => match self.pending.take() {
                Some(tree) => {
                    let delta_predictions = self.training_predictions(&tree);
                    self.trees.push(tree);
                    Message::CommitAck { run_id, delta_predictions }
                }
                None => Message::Error { run_id, message: "no pending candidate to commit".into() },
            },
            Message::PredictRequest { run_id, rows } => {
                let width = self.columns.len();
                if let Some(bad) = rows.iter().find(|r| r.len() != width) {
                    return Some(Message::Error {
                        run_id,
                        message: format!("row has {} features, agent holds {width}", bad.len()),
                    });
                }
                let values = rows
                    .iter()
                    .map(|r| self.trees.iter().map(|t| t.predict_unchecked(|f| r[f])).sum())
                    .collect();
                Message::PredictResponse { run_id, values }
            }
            Message::Shutdown => return None,
            other => Message::Error {
                run_id: other.run_id().unwrap_or(0),
                message: format!("agent cannot handle {}", other.kind()),
            },
        };
        self.release("scratch");
        Some(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node() -> AgentNode {
        AgentNode::new(0, vec![vec![0.0, 1.0, 2.0, 3.0]], TreeParams { max_depth: 1, min_samples_leaf: 1, min_gain: 0.0 })
    }

    #[test]
    fn commit_flow() {
        let mut a = node();
        let r = a.handle(Message::FitRequest { run_id: 1, residual: vec![0.0, 0.0, 4.0, 4.0], commit: false });
        assert!(matches!(r, Some(Message::FitResponse { run_id: 1, leaves: 2, .. })));
        assert!(a.trees().is_empty());
        match a.handle(Message::Commit { run_id: 2 }) {
            Some(Message::CommitAck { run_id: 2, delta_predictions }) => {
                assert_eq!(delta_predictions, vec![0.0, 0.0, 4.0, 4.0])
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(a.trees().len(), 1);
        assert!(matches!(a.handle(Message::Commit { run_id: 3 }), Some(Message::Error { run_id: 3, .. })));
    }

    #[test]
    fn predict_sums_committed_trees() {
        let mut a = node();
        a.handle(Message::FitRequest { run_id: 1, residual: vec![0.0, 0.0, 4.0, 4.0], commit: true });
        a.handle(Message::FitRequest { run_id: 2, residual: vec![1.0, 1.0, 1.0, 1.0], commit: true });
        match a.handle(Message::PredictRequest { run_id: 3, rows: vec![vec![0.5], vec![2.5]] }) {
            Some(Message::PredictResponse { values, .. }) => assert_eq!(values, vec![1.0, 5.0]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            a.handle(Message::PredictRequest { run_id: 4, rows: vec![vec![0.5, 1.0]] }),
            Some(Message::Error { .. })
        ));
    }

    #[test]
    fn bad_requests_yield_errors() {
        let mut a = node();
        assert!(matches!(
            a.handle(Message::FitRequest { run_id: 5, residual: vec![1.0], commit: true }),
            Some(Message::Error { run_id: 5, .. })
        ));
        assert!(matches!(a.handle(Message::PredictResponse { run_id: 6, values: vec![] }), Some(Message::Error { .. })));
        assert!(a.handle(Message::Shutdown).is_none());
    }

    #[test]
    fn ledger_accounts_columns_snapshot_and_scratch() {
        let ledger = Arc::new(MemoryLedger::new());
        let mut a = node().with_ledger(ledger.clone());
        a.handle(Message::FitRequest { run_id: 1, residual: vec![0.0, 0.0, 4.0, 4.0], commit: true });
        // residual snapshot is released before the scratch predictions are built
        assert_eq!(ledger.peak(Party::Agent(0)), 4 + 4);
        assert_eq!(ledger.current(Party::Agent(0)), 4);
    }
}
