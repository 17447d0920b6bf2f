//! Least-squares regression trees, the per-agent TRAIN primitive.
//!
//! Splits are found greedily top-down. Candidate thresholds are midpoints
//! between consecutive distinct values of a feature; among equal-gain splits
//! the lowest feature index wins, then the smallest threshold. Rows go left
//! iff `value <= threshold`.
//!
//! Node statistics are accumulated in a canonical order (rows sorted by
//! `(feature value, residual)` for split search and by residual for leaf
//! means) so the fitted tree does not depend on the order of the input rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("no training rows")]
    EmptyData,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid tree parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Minimum SSE reduction a split must achieve.
    pub min_gain: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 4, min_samples_leaf: 5, min_gain: 0.0 }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_samples_leaf < 1 {
            return Err(TreeError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        if !(self.min_gain >= 0.0 && self.min_gain.is_finite()) {
            return Err(TreeError::InvalidParams("min_gain must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        /// Column index local to the agent that fitted the tree.
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Number of feature columns the tree was fitted on.
    pub n_features: usize,
    pub root: Node,
}

impl RegressionTree {
    pub fn leaf(n_features: usize, value: f64) -> Self {
        RegressionTree { n_features, root: Node::Leaf { value } }
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64, TreeError> {
        if row.len() != self.n_features {
            return Err(TreeError::LengthMismatch { expected: self.n_features, found: row.len() });
        }
        Ok(self.predict_unchecked(|f| row[f]))
    }

    /// Routes a row whose features are fetched through `feature`.
    pub fn predict_unchecked(&self, feature: impl Fn(usize) -> f64) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split { feature: f, threshold, left, right } => {
                    node = if feature(*f) <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Predictions for every row of column-major data.
    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>, TreeError> {
        if columns.len() != self.n_features {
            return Err(TreeError::LengthMismatch { expected: self.n_features, found: columns.len() });
        }
        let n = columns.first().map_or(0, Vec::len);
        Ok((0..n).map(|i| self.predict_unchecked(|f| columns[f][i])).collect())
    }

    /// Number of leaves.
    pub fn size(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    /// Multiplies every leaf value by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        fn walk(n: &mut Node, factor: f64) {
            match n {
                Node::Leaf { value } => *value *= factor,
                Node::Split { left, right, .. } => {
                    walk(left, factor);
                    walk(right, factor);
                }
            }
        }
        walk(&mut self.root, factor);
        self
    }
}

pub fn tree_size(tree: &RegressionTree) -> usize {
    tree.size()
}

pub fn predict_tree(tree: &RegressionTree, row: &[f64]) -> Result<f64, TreeError> {
    tree.predict(row)
}

/// SSE reductions below this fraction of the node's sum of squares are
/// treated as rounding noise: such splits are not taken, and a single-leaf
/// tree whose mean is at noise level predicts 0.
const RELATIVE_GAIN_FLOOR: f64 = 1e-10;

/// Fits a tree on column-major `columns` (`d` columns of `n` rows) against `residual`.
pub fn fit_tree(columns: &[Vec<f64>], residual: &[f64], params: &TreeParams) -> Result<RegressionTree, TreeError> {
    params.validate()?;
    let n = residual.len();
    if n == 0 {
        return Err(TreeError::EmptyData);
    }
    for col in columns {
        if col.len() != n {
            return Err(TreeError::LengthMismatch { expected: n, found: col.len() });
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(TreeError::NonFinite("features"));
        }
    }
    if residual.iter().any(|v| !v.is_finite()) {
        return Err(TreeError::NonFinite("residual"));
    }
    let fitter = Fitter { columns, residual, params };
    let rows: Vec<usize> = (0..n).collect();
    let mut root = fitter.grow(rows, 0);
    if let Node::Leaf { value } = &mut root {
        let sum_sq: f64 = residual.iter().map(|r| r * r).sum();
        if n as f64 * *value * *value <= RELATIVE_GAIN_FLOOR * sum_sq {
            *value = 0.0;
        }
    }
    Ok(RegressionTree { n_features: columns.len(), root })
}

struct Fitter<'a> {
    columns: &'a [Vec<f64>],
    residual: &'a [f64],
    params: &'a TreeParams,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Fitter<'_> {
    fn grow(&self, rows: Vec<usize>, depth: usize) -> Node {
        let value = self.mean(&rows);
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf {
            return Node::Leaf { value };
        }
        let Some(best) = self.best_split(&rows) else {
            return Node::Leaf { value };
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.columns[best.feature][i] <= best.threshold);
        Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }

    fn mean(&self, rows: &[usize]) -> f64 {
        let mut vals: Vec<f64> = rows.iter().map(|&i| self.residual[i]).collect();
        vals.sort_by(f64::total_cmp);
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for (feature, col) in self.columns.iter().enumerate() {
            order.clear();
            order.extend(rows.iter().map(|&i| (col[i], self.residual[i])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

            let total: f64 = order.iter().map(|p| p.1).sum();
            let total_sq: f64 = order.iter().map(|p| p.1 * p.1).sum();
            let parent = total * total / n as f64;
            let floor = RELATIVE_GAIN_FLOOR * total_sq.max(f64::MIN_POSITIVE);

            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += order[k].1;
                let n_left = k + 1;
                let n_right = n - n_left;
                if order[k].0 == order[k + 1].0 || n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE reduction = S_L²/n_L + S_R²/n_R − S²/n
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - parent;
                if gain <= floor || gain < self.params.min_gain {
                    continue;
                }
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let (lo, hi) = (order[k].0, order[k + 1].0);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        // adjacent floats: the midpoint rounds up onto `hi`
                        threshold = lo;
                    }
                    best = Some(BestSplit { feature, threshold, gain });
                }
            }
        }
        best
    }
}

/// Sum of squared errors of `predictions` against `targets`.
pub fn sse(targets: &[f64], predictions: &[f64]) -> f64 {
    targets.iter().zip(predictions).map(|(t, p)| (t - p).powi(2)).sum()
}
