use serde::{Deserialize, Serialize};

/// How the fusion center picks the next agent to refit the residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Schedule {
    /// Agents `0, 1, …, D−1` in turn.
    #[default]
    RoundRobin,
    /// Every agent fits the residual; the lowest post-fit training SSE wins.
    Greedy,
    /// Like `Greedy`, minimizing `SSE + lambda · leaves`.
    GreedyPenalized { lambda: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Schedule::GreedyPenalized { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                Err(format!("lambda must be finite and non-negative, got {lambda}"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_greedy(&self) -> bool {
        !matches!(self, Schedule::RoundRobin)
    }

    pub fn label(&self) -> String {
        match self {
            Schedule::RoundRobin => "round_robin".into(),
            Schedule::Greedy => "greedy".into(),
            Schedule::GreedyPenalized { lambda } => format!("greedy_penalized({lambda})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScheduleState {
    pub n_agents: usize,
    /// Agent chosen at the previous update.
    pub last: Option<usize>,
}

/// Post-fit statistics of one agent's candidate tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateFit {
    pub sse: f64,
    pub leaves: usize,
}

/// Picks the next agent. `candidates[j]` is agent `j`'s fit on the current
/// residual and is ignored by `RoundRobin`. Ties go to the lowest agent id.
pub fn select_agent(schedule: &Schedule, state: &ScheduleState, candidates: &[CandidateFit]) -> usize {
    let argmin = |score: &dyn Fn(&CandidateFit) -> f64| {
        candidates
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (j, c)| {
                let s = score(c);
                match best {
                    Some((_, b)) if b <= s => best,
                    _ => Some((j, s)),
                }
            })
            .map_or(0, |(j, _)| j)
    };
    match schedule {
        Schedule::RoundRobin => state.last.map_or(0, |j| (j + 1) % state.n_agents.max(1)),
        Schedule::Greedy => argmin(&|c| c.sse),
        Schedule::GreedyPenalized { lambda } => argmin(&|c| c.sse + lambda * c.leaves as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(sse: f64, leaves: usize) -> CandidateFit {
        CandidateFit { sse, leaves }
    }

    #[test]
    fn round_robin_cycles() {
        let st = |last| ScheduleState { n_agents: 3, last };
        assert_eq!(select_agent(&Schedule::RoundRobin, &st(None), &[]), 0);
        assert_eq!(select_agent(&Schedule::RoundRobin, &st(Some(1)), &[]), 2);
        assert_eq!(select_agent(&Schedule::RoundRobin, &st(Some(2)), &[]), 0);
    }

    #[test]
    fn greedy_takes_minimum_sse() {
        let st = ScheduleState { n_agents: 2, last: None };
        assert_eq!(select_agent(&Schedule::Greedy, &st, &[fit(4.0, 1), fit(3.5, 9)]), 1);
        assert_eq!(select_agent(&Schedule::Greedy, &st, &[fit(3.5, 1), fit(3.5, 1)]), 0);
    }

    #[test]
    fn penalized_weighs_leaves() {
        let st = ScheduleState { n_agents: 2, last: None };
        let s = Schedule::GreedyPenalized { lambda: 1.0 };
        // 3.5 + 8 = 11.5 against 4.0 + 2 = 6.0
        assert_eq!(select_agent(&s, &st, &[fit(3.5, 8), fit(4.0, 2)]), 1);
        assert_eq!(select_agent(&Schedule::GreedyPenalized { lambda: 0.0 }, &st, &[fit(3.5, 8), fit(4.0, 2)]), 0);
        assert!(Schedule::GreedyPenalized { lambda: -1.0 }.validate().is_err());
    }
}
