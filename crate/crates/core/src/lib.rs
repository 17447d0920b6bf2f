//! Distributed additive regression over vertically partitioned data.
//!
//! A fusion center holding only the target vector coordinates agents that each
//! see a subset of the feature columns. Agents repeatedly fit the shared
//! residual on their own columns (the Iterative Conditional Expectation
//! Algorithm); the ensemble prediction is the sum of the agents' estimators.
//!
//! * [`exact_gauss`] runs the algorithm at the functional level on bivariate
//!   Gaussian polynomials with exact rational arithmetic.
//! * [`weak_learner`] is the per-agent regression tree.
//! * [`datasets`] generates the synthetic benchmarks and agent assignments.
//! * [`transport`] carries the fusion/agent protocol and audits memory.
//! * [`orchestrator`] drives training and the comparison baselines.

pub mod exact_gauss;
pub mod weak_learner;
pub mod datasets;
pub mod orchestrator;
pub mod rng;
pub mod transport;

pub use datasets::{Dataset, GeneratorSpec, Rule};
pub use exact_gauss::{Axis, BivarPoly, GaussPair, Rational, UniPoly};
pub use orchestrator::{
    predict_ensemble, run_hierarchical, run_icea, run_l2_boosting, AgentModel, FeatureAssignment, RunMetrics,
    RunOptions, Schedule, StopRule,
};
pub use transport::{CarrierKind, Message};
pub use weak_learner::{RegressionTree, TreeParams};
