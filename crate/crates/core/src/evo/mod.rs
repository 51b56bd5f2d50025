//! Multi-island evolutionary search over functional forms.
//!
//! Each iteration picks an island, draws a parent from it, asks a
//! [`Proposer`] for a child, fits the child on the training split, checks
//! it against the physical constraints and scores it on the validation
//! split. Test-split errors are stored on candidates but never read by
//! selection.

mod log;
pub mod memory;
pub mod operators;
mod proposer;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{run_all, ConstraintKind, ConstraintReport, ConstraintSettings, FixtureBundle};
use crate::energy::EnergyModel;
use crate::error::{Result, XcError};
use crate::constraints::FixtureSpec;
use crate::fit::{
    fit_with, perturbed_form, synthetic_dataset, Dataset, Evaluator, FitOptions, FitResult, Split,
    SyntheticDatasetSpec,
};
use crate::forms::{canonical_baseline, CanonicalName, FunctionalForm};
use crate::grid::Resolution;
use memory::{ConstraintOutcome, MemoryRecord, MemoryStore};

pub use log::{read_log, replay, write_log, CandidateRecord, LogRecord, ReplayReport, SelectionRecord, SkipRecord};
pub use operators::{OperatorKind, NEUTRAL_DENOMINATOR};
pub use proposer::{
    default_operator_weights, HttpProposer, HttpSettings, OperatorWeight, Proposal, ProposalContext, Proposer,
    ProposerRequest, ProposerResponse, ScriptedProposer, DEFAULT_TASK_TEXT,
};

pub const DEFAULT_J_TARGET: f64 = 3.45;
pub const PENALTY_FACTOR: f64 = 0.9;

/// R = J_target / j_val.
pub fn score(j_target: f64, j_val: f64) -> f64 {
    j_target / j_val
}

/// R · 0.9ⁿ.
pub fn penalized_score(r: f64, n_violations: usize) -> f64 {
    r * PENALTY_FACTOR.powi(n_violations as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub seed: u64,
    pub islands: usize,
    pub budget: usize,
    /// Probability of drawing a parent from the whole population rather
    /// than the elite archive.
    pub exploration_rate: f64,
    pub archive_cap: usize,
    pub migration_period: usize,
    pub migration_count: usize,
    pub j_target: f64,
    pub dead_end_min_attempts: usize,
    pub lineage_depth: usize,
    pub fit: FitOptions,
    pub constraints: ConstraintSettings,
    pub scripted: ScriptedProposer,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let mut fit = FitOptions::default();
        fit.lbfgs.max_iterations = 20;
        SearchConfig {
            seed: 0,
            islands: 4,
            budget: 200,
            exploration_rate: 0.8,
            archive_cap: 10,
            migration_period: 25,
            migration_count: 2,
            j_target: DEFAULT_J_TARGET,
            dead_end_min_attempts: 5,
            lineage_depth: 5,
            fit,
            constraints: ConstraintSettings::default(),
            scripted: ScriptedProposer::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.islands == 0 {
            return Err(XcError::validation("islands", "need at least one island"));
        }
        if !(0.0..=1.0).contains(&self.exploration_rate) {
            return Err(XcError::validation("exploration_rate", "must lie in [0, 1]"));
        }
        if self.archive_cap == 0 {
            return Err(XcError::validation("archive_cap", "must be positive"));
        }
        if self.migration_period == 0 {
            return Err(XcError::validation("migration_period", "must be positive"));
        }
        if !(self.j_target > 0.0) || !self.j_target.is_finite() {
            return Err(XcError::validation("j_target", "must be positive"));
        }
        self.fit.lbfgs.validate()?;
        self.scripted.validate()
    }

    pub fn exploit_rate(&self) -> f64 {
        1.0 - self.exploration_rate
    }
}

/// One evaluated form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub island: usize,
    pub iteration: usize,
    pub parents: Vec<usize>,
    /// Fitted form, or the unfitted child when fitting failed.
    pub form: FunctionalForm,
    pub fit: Option<FitResult>,
    pub report: Option<ConstraintReport>,
    pub n_violations: usize,
    pub pre_fit_j_val: Option<f64>,
    pub j_train: Option<f64>,
    pub j_val: Option<f64>,
    /// R; zero for failed candidates.
    pub score: f64,
    /// R · 0.9ⁿ; zero for failed candidates.
    pub penalized_score: f64,
    /// Reported only; selection never reads it.
    pub sealed_test_wrmsd: Option<f64>,
    pub plan_text: String,
    pub summary_text: String,
    pub proposer_tag: String,
    pub strategy_tags: Vec<String>,
    pub failure: Option<String>,
}

impl Candidate {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Checks R = J_target / j_val and R_evlv = R·0.9ⁿ on the stored
    /// fields, bit for bit.
    pub fn scores_consistent(&self, j_target: f64) -> bool {
        match (self.failure.as_ref(), self.j_val) {
            (None, Some(j)) => {
                let n = self.report.as_ref().map_or(0, |r| r.n_violations);
                self.score == score(j_target, j)
                    && self.n_violations == n
                    && self.penalized_score == penalized_score(self.score, self.n_violations)
                    && self.score > 0.0
            }
            (Some(_), _) => self.score == 0.0 && self.penalized_score == 0.0,
            (None, None) => false,
        }
    }

    fn outcomes(&self) -> Vec<ConstraintOutcome> {
        let Some(r) = &self.report else { return Vec::new() };
        ConstraintKind::ALL
            .into_iter()
            .map(|k| ConstraintOutcome {
                constraint: k,
                pass: r.get(k).pass,
                metric: r.get(k).metric,
            })
            .collect()
    }
}

/// Everything a candidate needs from one fit-and-check pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub form: FunctionalForm,
    pub fit: Option<FitResult>,
    pub report: Option<ConstraintReport>,
    pub pre_fit_j_val: Option<f64>,
    pub j_train: Option<f64>,
    pub j_val: Option<f64>,
    pub j_test: Option<f64>,
    pub failure: Option<String>,
}

impl Evaluation {
    fn failed(form: FunctionalForm, pre_fit_j_val: Option<f64>, fit: Option<FitResult>, why: String) -> Self {
        Evaluation {
            form,
            fit,
            report: None,
            pre_fit_j_val,
            j_train: None,
            j_val: None,
            j_test: None,
            failure: Some(why),
        }
    }
}

/// Validation WRMSD of `form` at its current parameters.
pub fn pre_fit_j_val(form: &FunctionalForm, dataset: &Dataset) -> Result<f64> {
    let ev = Evaluator::new(&EnergyModel::new(form.clone()), dataset)?;
    ev.wrmsd(&ev.initial(), Split::Val)
}

/// Fits on train, scores on val and test, and runs the constraint checks.
/// Failures are reported in the result rather than as errors.
pub fn evaluate_form(
    form: &FunctionalForm,
    dataset: &Dataset,
    fixtures: &FixtureBundle,
    fit: &FitOptions,
    settings: &ConstraintSettings,
) -> Evaluation {
    let fail = |why: String| Evaluation::failed(form.clone(), None, None, why);
    if let Err(e) = form.validate() {
        return fail(format!("invalid form: {e}"));
    }
    let ev = match Evaluator::new(&EnergyModel::new(form.clone()), dataset) {
        Ok(ev) => ev,
        Err(e) => return fail(format!("evaluation: {e}")),
    };
    let pre = match ev.wrmsd(&ev.initial(), Split::Val) {
        Ok(j) if j.is_finite() => j,
        Ok(j) => return fail(format!("pre-fit validation WRMSD is {j}")),
        Err(e) => return fail(format!("evaluation: {e}")),
    };
    let (fitted, result) = if ev.n_trainable() == 0 {
        (form.clone(), None)
    } else {
        match fit_with(&ev, fit) {
            Ok(r) if r.final_loss().is_finite() => match r.apply(form) {
                Ok(f) => (f, Some(r)),
                Err(e) => return Evaluation::failed(form.clone(), Some(pre), Some(r), format!("fit: {e}")),
            },
            Ok(r) => {
                return Evaluation::failed(form.clone(), Some(pre), Some(r), "fit: non-finite loss".into())
            }
            Err(e) => return Evaluation::failed(form.clone(), Some(pre), None, format!("fit: {e}")),
        }
    };
    let x = fitted.trainable_values();
    let splits = (
        ev.wrmsd(&x, Split::Train),
        ev.wrmsd(&x, Split::Val),
        if dataset.count(Split::Test) > 0 {
            ev.wrmsd(&x, Split::Test).map(Some)
        } else {
            Ok(None)
        },
    );
    let (j_train, j_val, j_test) = match splits {
        (Ok(a), Ok(b), Ok(c)) if a.is_finite() && b.is_finite() && b > 0.0 => (a, b, c),
        (Err(e), ..) | (_, Err(e), _) | (.., Err(e)) => {
            return Evaluation::failed(fitted, Some(pre), result, format!("scoring: {e}"))
        }
        _ => return Evaluation::failed(fitted, Some(pre), result, "scoring: degenerate WRMSD".into()),
    };
    let report = match run_all(&EnergyModel::new(fitted.clone()), fixtures, settings) {
        Ok(r) => r,
        Err(e) => return Evaluation::failed(fitted, Some(pre), result, format!("constraints: {e}")),
    };
    Evaluation {
        form: fitted,
        fit: result,
        report: Some(report),
        pre_fit_j_val: Some(pre),
        j_train: Some(j_train),
        j_val: Some(j_val),
        j_test,
        failure: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub id: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Island {
    pub id: usize,
    /// Candidate ids in arrival order.
    pub population: Vec<usize>,
    /// Descending by penalized score, ties by ascending id.
    pub archive: Vec<ArchiveEntry>,
    pub cap: usize,
    pub rng: ChaCha8Rng,
}

impl Island {
    pub fn new(id: usize, cap: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64 + 1);
        Island {
            id,
            population: Vec::new(),
            archive: Vec::new(),
            cap,
            rng,
        }
    }

    /// Adds a candidate to the population and offers it to the archive.
    pub fn admit(&mut self, id: usize, score: f64) {
        if self.population.contains(&id) {
            return;
        }
        self.population.push(id);
        self.archive.push(ArchiveEntry { id, score });
        self.archive
            .sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
        self.archive.truncate(self.cap);
    }

    pub fn contains(&self, id: usize) -> bool {
        self.population.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub candidate: usize,
    /// Drawn from the archive.
    pub exploit: bool,
    /// An archive draw was wanted but the archive was empty.
    pub fallback: bool,
}

/// With probability `exploit_rate` a uniform draw from the archive,
/// otherwise a uniform draw from the whole population.
pub fn select_parent(island: &mut Island, exploit_rate: f64) -> Result<Selection> {
    if island.population.is_empty() {
        return Err(XcError::Precondition(format!("island {} has an empty population", island.id)));
    }
    let u: f64 = island.rng.random();
    let want = u < exploit_rate;
    if want && !island.archive.is_empty() {
        let i = island.rng.random_range(0..island.archive.len());
        return Ok(Selection {
            candidate: island.archive[i].id,
            exploit: true,
            fallback: false,
        });
    }
    if want {
        ::log::debug!("island {}: archive empty, drawing from population", island.id);
    }
    let i = island.rng.random_range(0..island.population.len());
    Ok(Selection {
        candidate: island.population[i],
        exploit: false,
        fallback: want,
    })
}

/// Second parent for crossover: the best foreign elite in the island's
/// archive, else the best elite of the island that migrates into it.
pub fn select_donor(islands: &[Island], island: usize, home: &dyn Fn(usize) -> usize, exclude: usize) -> Option<usize> {
    let own = &islands[island];
    if let Some(e) = own.archive.iter().find(|e| home(e.id) != island && e.id != exclude) {
        return Some(e.id);
    }
    if islands.len() < 2 {
        return None;
    }
    let from = (island + islands.len() - 1) % islands.len();
    islands[from].archive.iter().find(|e| e.id != exclude).map(|e| e.id)
}

/// Copies each island's top `count` elites into the next island on the
/// ring. Returns (from, to, id) for every copy made.
pub fn migrate(islands: &mut [Island], count: usize) -> Vec<(usize, usize, usize)> {
    let k = islands.len();
    if k < 2 {
        return Vec::new();
    }
    let snapshot: Vec<Vec<ArchiveEntry>> = islands
        .iter()
        .map(|i| i.archive.iter().take(count).copied().collect())
        .collect();
    let mut moves = Vec::new();
    for (from, elites) in snapshot.into_iter().enumerate() {
        let to = (from + 1) % k;
        for e in elites {
            if !islands[to].contains(e.id) {
                islands[to].admit(e.id, e.score);
                moves.push((from, to, e.id));
            }
        }
    }
    moves
}

/// Island that runs iteration `t` (1-based).
pub fn island_for(t: usize, islands: usize) -> usize {
    t % islands
}

fn proposal_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(t as u64);
    rng
}

fn summarize(c: &Candidate, parent: Option<&Candidate>, sibling_rank: (usize, usize)) -> String {
    let mut parts = Vec::new();
    if let Some(why) = &c.failure {
        parts.push(format!("failed: {why}; score 0"));
    } else {
        let delta = match parent {
            Some(p) => format!(" ({:+.4} vs parent #{})", c.penalized_score - p.penalized_score, p.id),
            None => String::new(),
        };
        parts.push(format!(
            "R_evlv {:.4}{delta}; validation WRMSD {:.4} kcal/mol, train {:.4}",
            c.penalized_score,
            c.j_val.unwrap_or(f64::NAN),
            c.j_train.unwrap_or(f64::NAN)
        ));
    }
    if let Some(r) = &c.report {
        let fails = r.failures();
        if fails.is_empty() {
            parts.push("all constraints pass".into());
        } else {
            let list: Vec<String> = fails
                .iter()
                .map(|k| format!("{} ({:.3e} vs {:.1e})", k.name(), r.get(*k).metric, r.get(*k).threshold))
                .collect();
            parts.push(format!("violates {}", list.join(", ")));
        }
    }
    match &c.fit {
        Some(f) if f.converged => parts.push(format!("fit converged in {} iterations", f.iterations)),
        Some(f) => parts.push(format!("fit stopped after {} iterations ({:?})", f.iterations, f.stop_reason)),
        None if c.failure.is_none() => parts.push("no trainable parameters".into()),
        None => {}
    }
    if let Some(p) = parent {
        parts.push(format!("rank {} of {} among children of #{}", sibling_rank.0, sibling_rank.1, p.id));
    }
    parts.join("; ")
}

/// A synthetic search problem: reaction references from a perturbed
/// known form plus noise, and a fixture bundle with fewer proxies than
/// the default so candidates stay cheap to check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSpec {
    pub dataset: SyntheticDatasetSpec,
    /// References come from this form with perturbed parameters.
    pub truth_form: CanonicalName,
    pub truth_perturbation: f64,
    pub truth_seed: u64,
    /// Leading proxies of the default set to keep.
    pub n_proxies: usize,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            dataset: SyntheticDatasetSpec {
                label: "evolution".into(),
                seed: 11,
                n_systems: 16,
                n_reactions: 64,
                split_fractions: [0.5, 0.25, 0.25],
                noise_kcal: 0.3,
                offset_range_kcal: 5.0,
                resolution: Resolution::Coarse,
            },
            truth_form: CanonicalName::Safs26b,
            truth_perturbation: 0.2,
            truth_seed: 11,
            n_proxies: 6,
        }
    }
}

impl ProblemSpec {
    pub fn truth(&self) -> FunctionalForm {
        perturbed_form(&self.truth_form.form(), self.truth_perturbation, self.truth_seed)
    }

    pub fn fixture_spec(&self) -> FixtureSpec {
        let mut f = FixtureSpec::default();
        f.proxies.truncate(self.n_proxies.max(1));
        f
    }

    pub fn build(&self) -> Result<(Dataset, FixtureBundle)> {
        let ds = synthetic_dataset(&self.dataset, &EnergyModel::new(self.truth()))?;
        Ok((ds, self.fixture_spec().generate()?))
    }
}

/// Result of a full search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub candidates: Vec<Candidate>,
    pub islands: Vec<Island>,
    pub memory: MemoryStore,
    pub log: Vec<LogRecord>,
    pub best: Option<usize>,
}

impl SearchOutcome {
    pub fn best_candidate(&self) -> Option<&Candidate> {
        self.best.map(|i| &self.candidates[i])
    }

    pub fn seed_candidate(&self) -> &Candidate {
        &self.candidates[0]
    }

    /// Running best penalized score after each log record.
    pub fn best_trace(&self) -> Vec<f64> {
        self.log
            .iter()
            .filter_map(|r| match r {
                LogRecord::Candidate(c) => Some(c.best_so_far),
                _ => None,
            })
            .collect()
    }
}

fn candidate_from(
    id: usize,
    island: usize,
    iteration: usize,
    parents: Vec<usize>,
    eval: Evaluation,
    j_target: f64,
    proposal: (&str, &str, &[String]),
) -> Candidate {
    let (plan, tag, tags) = proposal;
    let n_violations = eval.report.as_ref().map_or(0, |r| r.n_violations);
    let (r, r_evlv) = match (eval.failure.is_none(), eval.j_val) {
        (true, Some(j)) => {
            let r = score(j_target, j);
            (r, penalized_score(r, n_violations))
        }
        _ => (0.0, 0.0),
    };
    Candidate {
        id,
        island,
        iteration,
        parents,
        form: eval.form,
        fit: eval.fit,
        report: eval.report,
        n_violations,
        pre_fit_j_val: eval.pre_fit_j_val,
        j_train: eval.j_train,
        j_val: eval.j_val,
        score: r,
        penalized_score: r_evlv,
        sealed_test_wrmsd: eval.j_test,
        plan_text: plan.to_string(),
        summary_text: String::new(),
        proposer_tag: tag.to_string(),
        strategy_tags: tags.to_vec(),
        failure: eval.failure,
    }
}

/// Runs the search. Deterministic for a deterministic proposer.
pub fn run_search(
    config: &SearchConfig,
    dataset: &Dataset,
    fixtures: &FixtureBundle,
    proposer: &mut dyn Proposer,
) -> Result<SearchOutcome> {
    config.validate()?;
    dataset.validate()?;
    let k = config.islands;
    let mut islands: Vec<Island> = (0..k).map(|i| Island::new(i, config.archive_cap, config.seed)).collect();
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut memory = MemoryStore::new();
    let mut log = vec![LogRecord::Header(log::Header::new(config, proposer.name()))];
    let mut best: Option<usize> = None;

    let seed_form = canonical_baseline();
    let seed_eval = evaluate_form(&seed_form, dataset, fixtures, &config.fit, &config.constraints);
    if let Some(why) = &seed_eval.failure {
        return Err(XcError::Precondition(format!("seed form cannot be evaluated: {why}")));
    }
    for (i, island) in islands.iter_mut().enumerate() {
        let mut c = candidate_from(
            i,
            i,
            0,
            Vec::new(),
            seed_eval.clone(),
            config.j_target,
            ("seed: canonical baseline", "seed", &["seed".to_string()]),
        );
        c.summary_text = summarize(&c, None, (1, 1));
        island.admit(c.id, c.penalized_score);
        memory.append(memory_record(&c, None))?;
        let id = c.id;
        candidates.push(c);
        if best.is_none_or(|b| candidates[id].penalized_score > candidates[b].penalized_score) {
            best = Some(id);
        }
        log.push(LogRecord::Candidate(Box::new(CandidateRecord {
            candidate: candidates[id].clone(),
            selection: None,
            donor: None,
            resampled: Vec::new(),
            best_so_far: best.map_or(0.0, |b| candidates[b].penalized_score),
        })));
    }

    for t in 1..=config.budget {
        let i = island_for(t, k);
        let selection = select_parent(&mut islands[i], config.exploit_rate())?;
        let parent_id = selection.candidate;
        let donor_id = {
            let home = |id: usize| candidates[id].island;
            select_donor(&islands, i, &home, parent_id)
        };
        let ctx = ProposalContext {
            iteration: t,
            parent: &candidates[parent_id].form,
            donor: donor_id.map(|d| &candidates[d].form),
            lineage: memory
                .lineage(parent_id, config.lineage_depth)
                .into_iter()
                .cloned()
                .collect(),
            dead_ends: memory.synthesize_dead_ends(config.dead_end_min_attempts),
        };
        let mut rng = proposal_rng(config.seed, t);
        let proposal = match proposer.propose(&ctx, &mut rng) {
            Ok(p) => p,
            Err(e) => {
                ::log::warn!("iteration {t}: proposal failed: {e}");
                log.push(LogRecord::Skip(SkipRecord {
                    iteration: t,
                    island: i,
                    selection: SelectionRecord::from(selection),
                    reason: e.to_string(),
                }));
                migrate_on_schedule(config, t, &mut islands, &mut log);
                continue;
            }
        };
        let mut parents = vec![parent_id];
        if proposal.used_donor {
            parents.extend(donor_id);
        }
        let eval = evaluate_form(&proposal.form, dataset, fixtures, &config.fit, &config.constraints);
        let id = candidates.len();
        let mut c = candidate_from(
            id,
            i,
            t,
            parents,
            eval,
            config.j_target,
            (&proposal.plan_text, &proposal.proposer_tag, &proposal.strategy_tags),
        );
        let siblings: Vec<f64> = candidates
            .iter()
            .filter(|s| s.parents.first() == Some(&parent_id))
            .map(|s| s.penalized_score)
            .collect();
        let rank = 1 + siblings.iter().filter(|s| **s > c.penalized_score).count();
        c.summary_text = summarize(&c, Some(&candidates[parent_id]), (rank, siblings.len() + 1));
        memory.append(memory_record(&c, Some(&candidates[parent_id])))?;
        islands[i].admit(id, c.penalized_score);
        ::log::info!(
            "iteration {t} island {i}: #{id} {} R_evlv {:.4}",
            c.proposer_tag,
            c.penalized_score
        );
        candidates.push(c);
        if !candidates[id].failed() && best.is_none_or(|b| candidates[id].penalized_score > candidates[b].penalized_score) {
            best = Some(id);
        }
        log.push(LogRecord::Candidate(Box::new(CandidateRecord {
            candidate: candidates[id].clone(),
            selection: Some(SelectionRecord::from(selection)),
            donor: if proposal.used_donor { donor_id } else { None },
            resampled: proposal.resampled,
            best_so_far: best.map_or(0.0, |b| candidates[b].penalized_score),
        })));
        migrate_on_schedule(config, t, &mut islands, &mut log);
    }
    Ok(SearchOutcome {
        candidates,
        islands,
        memory,
        log,
        best,
    })
}

fn migrate_on_schedule(config: &SearchConfig, t: usize, islands: &mut [Island], log: &mut Vec<LogRecord>) {
    if t.is_multiple_of(config.migration_period) && islands.len() > 1 {
        let moves = migrate(islands, config.migration_count);
        log.push(LogRecord::Migration { iteration: t, moves });
    }
}

fn memory_record(c: &Candidate, parent: Option<&Candidate>) -> MemoryRecord {
    MemoryRecord {
        iteration: c.iteration,
        island: c.island,
        candidate: c.id,
        parents: c.parents.clone(),
        plan_text: c.plan_text.clone(),
        summary_text: c.summary_text.clone(),
        score_delta: parent.map_or(0.0, |p| c.penalized_score - p.penalized_score),
        outcomes: c.outcomes(),
        strategy_tags: c.strategy_tags.clone(),
        fit_failed: c.failure.is_some(),
    }
}

/// Distinct ids ever admitted to any island.
pub fn admitted(islands: &[Island]) -> BTreeSet<usize> {
    islands.iter().flat_map(|i| i.population.iter().copied()).collect()
}
