use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;

pub const METRICS_HEADER: &str = "update,round,agent,train_mse,test_mse,leaves,messages,scalars_sent";

/// One agent update. `update` and `round` count from 1, `agent` from 0.
/// `messages` and `scalars_sent` are the traffic of this update alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: usize,
    pub round: usize,
    pub agent: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub leaves: usize,
    pub messages: usize,
    pub scalars_sent: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Training MSE before any update.
    pub initial_train_mse: f64,
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn final_train_mse(&self) -> f64 {
        self.rows.last().map_or(self.initial_train_mse, |r| r.train_mse)
    }

    pub fn final_test_mse(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.test_mse)
    }

    pub fn total_leaves(&self) -> usize {
        self.rows.iter().map(|r| r.leaves).sum()
    }

    pub fn total_messages(&self) -> usize {
        self.rows.iter().map(|r| r.messages).sum()
    }

    /// Updates (1-based) at which training MSE went up.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        let mut prev = self.initial_train_mse;
        let mut out = Vec::new();
        for r in &self.rows {
            if r.train_mse > prev {
                out.push(r.update);
            }
            prev = r.train_mse;
        }
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.monotonicity_violations().is_empty()
    }

    /// CSV with [`METRICS_HEADER`]; reals use the shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let test = r.test_mse.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.update, r.round, r.agent, r.train_mse, test, r.leaves, r.messages, r.scalars_sent
            );
        }
        out
    }

    /// Parses [`RunMetrics::to_csv`] output. The initial MSE is not part of the
    /// file and is taken as the first row's training MSE.
    pub fn from_csv(text: &str) -> Result<Self, OrchestratorError> {
        let bad = |line: usize, what: &str| OrchestratorError::Metrics(format!("line {line}: {what}"));
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == METRICS_HEADER => {}
            _ => return Err(bad(1, "missing or unexpected header")),
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let ln = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(ln, "expected 8 fields"));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(ln, "bad integer"));
            let real = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(ln, "bad number"));
            rows.push(MetricsRow {
                update: int(f[0])?,
                round: int(f[1])?,
                agent: int(f[2])?,
                train_mse: real(f[3])?,
                test_mse: if f[4].trim().is_empty() { None } else { Some(real(f[4])?) },
                leaves: int(f[5])?,
                messages: int(f[6])?,
                scalars_sent: int(f[7])?,
            });
        }
        let initial_train_mse = rows.first().map_or(0.0, |r| r.train_mse);
        Ok(RunMetrics { initial_train_mse, rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), OrchestratorError> {
        std::fs::write(path, self.to_csv()).map_err(|e| OrchestratorError::Metrics(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(update: usize, train: f64, test: Option<f64>) -> MetricsRow {
        MetricsRow { update, round: update, agent: 0, train_mse: train, test_mse: test, leaves: 3, messages: 2, scalars_sent: 8 }
    }

    #[test]
    fn csv_roundtrip() {
        let m = RunMetrics { initial_train_mse: 2.0, rows: vec![row(1, 1.0, Some(0.1 + 0.2)), row(2, 0.5, None)] };
        let text = m.to_csv();
        assert!(text.starts_with(METRICS_HEADER));
        assert!(text.contains("2,2,0,0.5,,3,2,8"));
        let back = RunMetrics::from_csv(&text).unwrap();
        assert_eq!(back.rows, m.rows);
        assert!(RunMetrics::from_csv("nope\n").is_err());
        assert!(RunMetrics::from_csv(&format!("{METRICS_HEADER}\n1,2,3\n")).is_err());
    }

    #[test]
    fn monotonicity() {
        let ok = RunMetrics { initial_train_mse: 2.0, rows: vec![row(1, 1.0, None), row(2, 1.0, None)] };
        assert!(ok.is_monotone());
        let bad = RunMetrics { initial_train_mse: 2.0, rows: vec![row(1, 1.0, None), row(2, 1.5, None)] };
        assert_eq!(bad.monotonicity_violations(), vec![2]);
        assert_eq!(bad.total_leaves(), 6);
    }
}
