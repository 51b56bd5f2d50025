//! Append-only record of every attempt, lineage retrieval, and dead-end
//! synthesis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintKind;
use crate::error::{Result, XcError};

pub const FIT_FAILURE: &str = "fit_failure";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintOutcome {
    pub constraint: ConstraintKind,
    pub pass: bool,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub iteration: usize,
    pub island: usize,
    pub candidate: usize,
    pub parents: Vec<usize>,
    pub plan_text: String,
    pub summary_text: String,
    /// Child R_evlv minus primary parent R_evlv.
    pub score_delta: f64,
    pub outcomes: Vec<ConstraintOutcome>,
    pub strategy_tags: Vec<String>,
    pub fit_failed: bool,
}

impl MemoryRecord {
    /// Failure categories in canonical order.
    pub fn failure_categories(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.fit_failed {
            out.push(FIT_FAILURE);
        }
        for o in &self.outcomes {
            if !o.pass {
                out.push(o.constraint.name());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadEnd {
    pub tag: String,
    pub attempts: usize,
    /// Failure category every attempt shares.
    pub cause: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    records: Vec<MemoryRecord>,
    by_candidate: BTreeMap<usize, usize>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rejects records that would break per-island iteration order.
    pub fn append(&mut self, record: MemoryRecord) -> Result<()> {
        if let Some(last) = self.records.iter().rev().find(|r| r.island == record.island) {
            if record.iteration <= last.iteration {
                return Err(XcError::Protocol(format!(
                    "island {} iteration {} does not follow {}",
                    record.island, record.iteration, last.iteration
                )));
            }
        }
        if self.by_candidate.insert(record.candidate, self.records.len()).is_some() {
            return Err(XcError::Protocol(format!("candidate {} recorded twice", record.candidate)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, candidate: usize) -> Option<&MemoryRecord> {
        self.by_candidate.get(&candidate).map(|i| &self.records[*i])
    }

    /// Records along the primary-parent chain of `candidate`, nearest
    /// first, at most `depth` of them. The candidate itself is included.
    pub fn lineage(&self, candidate: usize, depth: usize) -> Vec<&MemoryRecord> {
        let mut out = Vec::new();
        let mut cur = Some(candidate);
        while let Some(id) = cur {
            if out.len() >= depth {
                break;
            }
            let Some(r) = self.get(id) else { break };
            out.push(r);
            cur = r.parents.first().copied();
        }
        out
    }

    /// Tags attempted at least `min_attempts` times that never improved
    /// on their parent and whose attempts all fail for a common reason.
    pub fn synthesize_dead_ends(&self, min_attempts: usize) -> Vec<DeadEnd> {
        let mut by_tag: BTreeMap<&str, Vec<&MemoryRecord>> = BTreeMap::new();
        for r in &self.records {
            for t in &r.strategy_tags {
                by_tag.entry(t.as_str()).or_default().push(r);
            }
        }
        let mut out = Vec::new();
        for (tag, recs) in by_tag {
            if recs.len() < min_attempts.max(1) || recs.iter().any(|r| r.score_delta > 0.0) {
                continue;
            }
            let mut shared = recs[0].failure_categories();
            for r in &recs[1..] {
                let cats = r.failure_categories();
                shared.retain(|c| cats.contains(c));
            }
            if let Some(cause) = shared.first() {
                out.push(DeadEnd {
                    tag: tag.to_string(),
                    attempts: recs.len(),
                    cause: cause.to_string(),
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(candidate: usize, iteration: usize, tag: &str, delta: f64, ueg_pass: bool) -> MemoryRecord {
        MemoryRecord {
            iteration,
            island: 0,
            candidate,
            parents: vec![candidate.saturating_sub(1)],
            plan_text: String::new(),
            summary_text: String::new(),
            score_delta: delta,
            outcomes: vec![ConstraintOutcome {
                constraint: ConstraintKind::UegLimit,
                pass: ueg_pass,
                metric: 0.0,
            }],
            strategy_tags: vec![tag.to_string()],
            fit_failed: false,
        }
    }

    fn store(n: usize, improve_at: Option<usize>) -> MemoryStore {
        let mut s = MemoryStore::new();
        for i in 0..n {
            let delta = if Some(i) == improve_at { 0.1 } else { -0.1 };
            s.append(rec(i + 1, i + 1, "rational_wrap:gx", delta, false)).unwrap();
        }
        s
    }

    #[test]
    fn five_uniform_failures_make_a_dead_end() {
        let d = store(5, None).synthesize_dead_ends(5);
        assert_eq!(
            d,
            vec![DeadEnd {
                tag: "rational_wrap:gx".into(),
                attempts: 5,
                cause: "ueg_limit".into()
            }]
        );
    }

    #[test]
    fn four_attempts_are_not_enough() {
        assert!(store(4, None).synthesize_dead_ends(5).is_empty());
    }

    #[test]
    fn one_improvement_vetoes() {
        assert!(store(5, Some(2)).synthesize_dead_ends(5).is_empty());
    }

    #[test]
    fn mixed_causes_are_not_a_dead_end() {
        let mut s = store(4, None);
        s.append(rec(5, 5, "rational_wrap:gx", -0.1, true)).unwrap();
        assert!(s.synthesize_dead_ends(5).is_empty());
    }

    #[test]
    fn store_is_append_only_in_order() {
        let mut s = store(2, None);
        assert!(s.append(rec(9, 2, "x", 0.0, true)).is_err());
        assert!(s.append(rec(1, 7, "x", 0.0, true)).is_err());
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn lineage_follows_primary_parents() {
        let s = store(5, None);
        let ids: Vec<usize> = s.lineage(5, 3).iter().map(|r| r.candidate).collect();
        assert_eq!(ids, vec![5, 4, 3]);
        assert_eq!(s.lineage(2, 10).len(), 2);
    }
}
