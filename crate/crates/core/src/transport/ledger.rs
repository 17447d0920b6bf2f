//! Scalar-slot accounting for the memory constraint.
//!
//! The fusion center may hold one residual vector plus one scratch vector
//! (`2n` slots); an agent may hold its own columns, a residual snapshot and a
//! scratch vector (`(|F_j| + 2)·n` slots). Both bounds allow a constant
//! overhead of [`OVERHEAD_SLOTS`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

pub const OVERHEAD_SLOTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Fusion,
    Agent(usize),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Fusion => write!(f, "fusion"),
            Party::Agent(j) => write!(f, "agent {j}"),
        }
    }
}

#[derive(Debug, Default, Clone)]
struct Usage {
    live: BTreeMap<String, usize>,
    current: usize,
    peak: usize,
}

#[derive(Debug, Default)]
pub struct MemoryLedger {
    parties: Mutex<BTreeMap<Party, Usage>>,
}

impl MemoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `slots` scalars held under `label`. Re-allocating a live label
    /// replaces its previous size.
    pub fn alloc(&self, party: Party, label: &str, slots: usize) {
        let mut parties = self.parties.lock().expect("ledger poisoned");
        let usage = parties.entry(party).or_default();
        if let Some(old) = usage.live.insert(label.to_owned(), slots) {
            usage.current -= old;
        }
        usage.current += slots;
        usage.peak = usage.peak.max(usage.current);
    }

    pub fn free(&self, party: Party, label: &str) {
        let mut parties = self.parties.lock().expect("ledger poisoned");
        if let Some(usage) = parties.get_mut(&party) {
            if let Some(old) = usage.live.remove(label) {
                usage.current -= old;
            }
        }
    }

    pub fn peak(&self, party: Party) -> usize {
        self.parties.lock().expect("ledger poisoned").get(&party).map_or(0, |u| u.peak)
    }

    pub fn current(&self, party: Party) -> usize {
        self.parties.lock().expect("ledger poisoned").get(&party).map_or(0, |u| u.current)
    }

    /// Labels currently live for `party`, with their sizes.
    pub fn live(&self, party: Party) -> Vec<(String, usize)> {
        self.parties
            .lock()
            .expect("ledger poisoned")
            .get(&party)
            .map(|u| u.live.iter().map(|(k, v)| (k.clone(), *v)).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditLine {
    pub party: Party,
    pub peak: usize,
    pub bound: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub lines: Vec<AuditLine>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn fusion_peak(&self) -> usize {
        self.lines.iter().find(|l| l.party == Party::Fusion).map_or(0, |l| l.peak)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(
                f,
                "{:<10} peak {:>8} bound {:>8} {}",
                l.party.to_string(),
                l.peak,
                l.bound,
                if l.pass { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Checks every party's peak against its bound for a run over `n` rows where
/// agent `j` holds `agent_dims[j]` feature columns.
pub fn audit_memory(ledger: &MemoryLedger, n: usize, agent_dims: &[usize]) -> AuditReport {
    let mut lines = Vec::with_capacity(agent_dims.len() + 1);
    let bound = 2 * n + OVERHEAD_SLOTS;
    let peak = ledger.peak(Party::Fusion);
    lines.push(AuditLine { party: Party::Fusion, peak, bound, pass: peak <= bound });
    for (j, &d) in agent_dims.iter().enumerate() {
        let party = Party::Agent(j);
        let bound = (d + 2) * n + OVERHEAD_SLOTS;
        let peak = ledger.peak(party);
        lines.push(AuditLine { party, peak, bound, pass: peak <= bound });
    }
    AuditReport { lines }
}
