//! Newline-delimited JSON search log and its replay check.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{island_for, migrate, select_parent, Candidate, Island, SearchConfig, Selection};
use crate::error::{Result, XcError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub seed: u64,
    pub islands: usize,
    pub budget: usize,
    pub exploration_rate: f64,
    pub archive_cap: usize,
    pub migration_period: usize,
    pub migration_count: usize,
    pub j_target: f64,
    pub proposer: String,
}

impl Header {
    pub fn new(c: &SearchConfig, proposer: &str) -> Self {
        Header {
            seed: c.seed,
            islands: c.islands,
            budget: c.budget,
            exploration_rate: c.exploration_rate,
            archive_cap: c.archive_cap,
            migration_period: c.migration_period,
            migration_count: c.migration_count,
            j_target: c.j_target,
            proposer: proposer.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub parent: usize,
    pub exploit: bool,
    pub fallback: bool,
}

impl From<Selection> for SelectionRecord {
    fn from(s: Selection) -> Self {
        SelectionRecord {
            parent: s.candidate,
            exploit: s.exploit,
            fallback: s.fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate: Candidate,
    /// Absent for seeds.
    pub selection: Option<SelectionRecord>,
    pub donor: Option<usize>,
    /// Operators rejected before the one used.
    pub resampled: Vec<String>,
    /// Best penalized score over all candidates so far.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub iteration: usize,
    pub island: usize,
    pub selection: SelectionRecord,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header(Header),
    Candidate(Box<CandidateRecord>),
    Skip(SkipRecord),
    Migration {
        iteration: usize,
        /// (from island, to island, candidate id)
        moves: Vec<(usize, usize, usize)>,
    },
}

pub fn write_log(path: impl AsRef<Path>, records: &[LogRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| XcError::io(path, e))
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| XcError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| XcError::Parse {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub islands: Vec<Island>,
    /// Every parent draw in order, skips included.
    pub selections: Vec<SelectionRecord>,
    pub candidates: usize,
    pub best_trace: Vec<f64>,
}

fn mismatch(what: String) -> XcError {
    XcError::Protocol(format!("replay mismatch: {what}"))
}

/// Rebuilds island state from a log, redraws every selection with the
/// logged seed and checks it against the record. Also checks the score
/// identities, the archive contents and the running best.
pub fn replay(records: &[LogRecord]) -> Result<ReplayReport> {
    let Some(LogRecord::Header(h)) = records.first() else {
        return Err(XcError::Protocol("log does not start with a header".into()));
    };
    if h.islands == 0 || h.migration_period == 0 {
        return Err(XcError::Protocol("header has zero islands or migration period".into()));
    }
    let mut islands: Vec<Island> = (0..h.islands).map(|i| Island::new(i, h.archive_cap, h.seed)).collect();
    let mut scores: Vec<f64> = Vec::new();
    let mut selections = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut best_trace = Vec::new();
    let exploit = 1.0 - h.exploration_rate;

    let mut check_selection = |islands: &mut Vec<Island>, t: usize, island: usize, logged: &SelectionRecord| {
        if island != island_for(t, h.islands) {
            return Err(mismatch(format!("iteration {t} ran on island {island}")));
        }
        let s = SelectionRecord::from(select_parent(&mut islands[island], exploit)?);
        if s != *logged {
            return Err(mismatch(format!("iteration {t} selected {s:?}, log has {logged:?}")));
        }
        selections.push(s);
        Ok(())
    };

    for r in &records[1..] {
        match r {
            LogRecord::Header(_) => return Err(XcError::Protocol("second header in log".into())),
            LogRecord::Candidate(rec) => {
                let c = &rec.candidate;
                if c.id != scores.len() {
                    return Err(mismatch(format!("candidate id {} out of order", c.id)));
                }
                if !c.scores_consistent(h.j_target) {
                    return Err(mismatch(format!("candidate {} has inconsistent scores", c.id)));
                }
                match (&rec.selection, c.iteration) {
                    (None, 0) => {}
                    (Some(sel), t) if t > 0 => {
                        check_selection(&mut islands, t, c.island, sel)?;
                        if c.parents.first() != Some(&sel.parent) {
                            return Err(mismatch(format!("candidate {} parent differs from selection", c.id)));
                        }
                    }
                    _ => return Err(mismatch(format!("candidate {} selection/iteration disagree", c.id))),
                }
                scores.push(c.penalized_score);
                islands[c.island].admit(c.id, c.penalized_score);
                check_archive(&islands[c.island], &scores)?;
                if !c.failed() {
                    best = best.max(c.penalized_score);
                }
                if rec.best_so_far != best {
                    return Err(mismatch(format!("best_so_far {} vs {best} at candidate {}", rec.best_so_far, c.id)));
                }
                best_trace.push(best);
            }
            LogRecord::Skip(s) => check_selection(&mut islands, s.iteration, s.island, &s.selection)?,
            LogRecord::Migration { iteration, moves } => {
                if iteration % h.migration_period != 0 {
                    return Err(mismatch(format!("migration at iteration {iteration}")));
                }
                let redone = migrate(&mut islands, h.migration_count);
                if &redone != moves {
                    return Err(mismatch(format!("migration at iteration {iteration}")));
                }
                for isl in &islands {
                    check_archive(isl, &scores)?;
                }
            }
        }
    }
    Ok(ReplayReport {
        islands,
        selections,
        candidates: scores.len(),
        best_trace,
    })
}

fn check_archive(island: &Island, scores: &[f64]) -> Result<()> {
    let mut all: Vec<(usize, f64)> = island.population.iter().map(|id| (*id, scores[*id])).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(island.cap);
    let archived: Vec<(usize, f64)> = island.archive.iter().map(|e| (e.id, e.score)).collect();
    if all != archived {
        return Err(mismatch(format!("island {} archive is not its top {}", island.id, island.cap)));
    }
    Ok(())
}
