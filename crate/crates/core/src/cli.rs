//! Command-line front end: `gen`, `check`, `fit`, `evolve` and `report`.
//!
//! Settings come from one JSON [`RunConfig`], then `XCFORGE_*` environment
//! variables, then flags. Nested keys use a double underscore, so
//! `XCFORGE_PROBLEM__DATASET__N_SYSTEMS=20` sets `problem.dataset.n_systems`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::constraints::{run_all, ConstraintSettings, FixtureBundle, FixtureSpec};
use crate::energy::EnergyModel;
use crate::error::{Result, XcError};
use crate::evo::{
    read_log, replay, run_search, write_log, Candidate, HttpProposer, HttpSettings, LogRecord, ProblemSpec,
    Proposer, ScriptedProposer, SearchConfig,
};
use crate::fit::{fit_with, Dataset, Evaluator, FitOptions, FitResult, Split, SyntheticDatasetSpec};
use crate::forms::{CanonicalName, FunctionalForm};

pub const EXIT_INPUT: i32 = 64;
pub const EXIT_PRECONDITION: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;
pub const ENV_PREFIX: &str = "XCFORGE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProposerMode {
    Scripted,
    External(HttpSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    /// Dataset manifest; `evolve` builds `problem` when absent.
    pub dataset: Option<PathBuf>,
    /// Fixture bundle manifest; generated in memory when absent.
    pub fixtures: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub islands: usize,
    pub budget: usize,
    pub exploration_rate: f64,
    pub archive_cap: usize,
    pub migration_period: usize,
    pub migration_count: usize,
    pub j_target: f64,
    pub dead_end_min_attempts: usize,
    pub lineage_depth: usize,
    /// Optimizer for `fit`.
    pub optimizer: FitOptions,
    /// Optimizer for candidates during `evolve`.
    pub evolution_optimizer: FitOptions,
    pub constraints: ConstraintSettings,
    pub operators: ScriptedProposer,
    pub proposer: ProposerMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SearchConfig::default();
        RunConfig {
            seed: s.seed,
            threads: None,
            out: PathBuf::from("xcforge-out"),
            dataset: None,
            fixtures: None,
            problem: ProblemSpec::default(),
            islands: s.islands,
            budget: s.budget,
            exploration_rate: s.exploration_rate,
            archive_cap: s.archive_cap,
            migration_period: s.migration_period,
            migration_count: s.migration_count,
            j_target: s.j_target,
            dead_end_min_attempts: s.dead_end_min_attempts,
            lineage_depth: s.lineage_depth,
            optimizer: FitOptions::default(),
            evolution_optimizer: s.fit,
            constraints: s.constraints,
            operators: s.scripted,
            proposer: ProposerMode::Scripted,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(XcError::validation("threads", "must be positive"));
        }
        self.optimizer.lbfgs.validate()?;
        self.search_config().validate()
    }

    pub fn search_config(&self) -> SearchConfig {
        let mut fit = self.evolution_optimizer.clone();
        fit.seed = self.seed;
        SearchConfig {
            seed: self.seed,
            islands: self.islands,
            budget: self.budget,
            exploration_rate: self.exploration_rate,
            archive_cap: self.archive_cap,
            migration_period: self.migration_period,
            migration_count: self.migration_count,
            j_target: self.j_target,
            dead_end_min_attempts: self.dead_end_min_attempts,
            lineage_depth: self.lineage_depth,
            fit,
            constraints: self.constraints.clone(),
            scripted: self.operators.clone(),
        }
    }

    /// Starts from the defaults, merges in `path` (if any), then applies
    /// `XCFORGE_*` overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default())?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| XcError::io(p, e))?;
            let file: Value = serde_json::from_str(&text).map_err(|e| XcError::Parse {
                line: e.line(),
                message: format!("{}: {e}", p.display()),
            })?;
            if !file.is_object() {
                return Err(XcError::validation("config", "top level must be an object"));
            }
            merge(&mut value, file);
        }
        apply_env(&mut value, env)?;
        let config: RunConfig = serde_json::from_value(value).map_err(|e| XcError::Parse {
            line: 0,
            message: format!("config: {e}"),
        })?;
        config.validate()?;
        Ok(config)
    }
}

/// Recursively overlays `top` on `base`; non-object values replace.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets `XCFORGE_A__B=v` as `a.b = v`. Values that parse as JSON are
/// used as such, anything else as a string.
pub fn apply_env(value: &mut Value, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(|s| s.to_ascii_lowercase())
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(XcError::validation(key, "empty key segment"));
        }
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut node = &mut *value;
        for (i, seg) in path.iter().enumerate() {
            let Value::Object(map) = node else {
                return Err(XcError::validation(key, format!("'{seg}' is not inside an object")));
            };
            if i + 1 == path.len() {
                match map.get_mut(seg) {
                    Some(slot) => merge(slot, parsed),
                    None => {
                        map.insert(seg.clone(), parsed);
                    }
                }
                break;
            }
            node = map.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Exit status for an error.
pub fn exit_code(e: &XcError) -> i32 {
    match e {
        XcError::Parse { .. } | XcError::Io { .. } | XcError::Json(_) | XcError::Validation { .. } | XcError::Data(_) => {
            EXIT_INPUT
        }
        XcError::Precondition(_) => EXIT_PRECONDITION,
        _ => EXIT_INTERNAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "xcforge", version, about = "Meta-GGA functional forms: generate, check, fit, evolve")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the fixture bundle, search dataset, recovery dataset and canonical forms.
    Gen {
        /// JSON generation spec; defaults are used when omitted.
        spec: Option<PathBuf>,
    },
    /// Run the constraint checks; the exit status is the number of violations.
    Check {
        form: PathBuf,
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Fit a form's trainable parameters on a dataset's training split.
    Fit {
        form: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the island search and write its log, best form and summary.
    Evolve,
    /// Verify a search log by replay and print its summary.
    Report { log: PathBuf },
}

/// What `gen` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub fixtures: FixtureSpec,
    pub search: ProblemSpec,
    pub recovery: ProblemSpec,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            fixtures: FixtureSpec::default(),
            search: ProblemSpec::default(),
            recovery: ProblemSpec {
                dataset: SyntheticDatasetSpec {
                    label: "recovery".into(),
                    seed: 5,
                    noise_kcal: 0.0,
                    ..Default::default()
                },
                truth_form: CanonicalName::Baseline,
                truth_perturbation: 0.1,
                truth_seed: 5,
                n_proxies: 1,
            },
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| XcError::io(dir, e)),
        None => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| XcError::io(path, e))
}

fn save_form(form: &FunctionalForm, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    form.save(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| XcError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| XcError::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn load_form(path: &Path) -> Result<FunctionalForm> {
    FunctionalForm::load(path).map_err(|e| match e {
        XcError::Parse { line, message } => XcError::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn cmd_gen(spec: Option<&Path>, out: &Path) -> Result<i32> {
    let spec: GenSpec = match spec {
        Some(p) => read_json(p)?,
        None => GenSpec::default(),
    };
    let bundle = spec.fixtures.generate()?;
    let manifest = bundle.write(out.join("fixtures"))?;
    println!("fixtures: {} grid files, manifest {}", bundle.n_files(), manifest.display());
    for (name, problem) in [("dataset", &spec.search), ("recovery", &spec.recovery)] {
        let ds = crate::fit::synthetic_dataset(&problem.dataset, &EnergyModel::new(problem.truth()))?;
        let path = ds.save(out.join(name))?;
        println!("{name}: {} systems, {} reactions, manifest {}", ds.systems.len(), ds.reactions.len(), path.display());
    }
    for name in [CanonicalName::Baseline, CanonicalName::Safs26a, CanonicalName::Safs26b] {
        let tag = serde_json::to_value(name)?.as_str().unwrap_or("form").to_string();
        save_form(&name.form(), &out.join("forms").join(format!("{tag}.json")))?;
    }
    use crate::constraints::fixtures as fx;
    for (name, form) in [
        ("antisymmetric_zeta", fx::antisymmetric_zeta_fixture()),
        ("ueg_bias", fx::ueg_bias_fixture()),
        ("laplacian", fx::laplacian_fixture()),
        ("rs_switch", fx::rs_switch_fixture()),
        ("composite", fx::composite_fixture()),
    ] {
        save_form(&form, &out.join("forms").join("violating").join(format!("{name}.json")))?;
    }
    write_json(&out.join("gen_spec.json"), &spec)?;
    Ok(0)
}

fn load_fixtures(path: Option<&Path>) -> Result<FixtureBundle> {
    match path {
        Some(p) => FixtureBundle::load(p),
        None => FixtureSpec::default().generate(),
    }
}

pub fn cmd_check(form: &Path, fixtures: Option<&Path>, settings: &ConstraintSettings, out: &Path) -> Result<i32> {
    let form = load_form(form)?;
    let bundle = load_fixtures(fixtures)?;
    let report = run_all(&EnergyModel::new(form.clone()), &bundle, settings)?;
    write_text(&out.join("constraint_report.json"), &(report.to_json()? + "\n"))?;
    for k in crate::constraints::ConstraintKind::ALL {
        let r = report.get(k);
        println!(
            "{:<17} {} {:.3e} {} (threshold {:.1e})",
            k.name(),
            if r.pass { "pass" } else { "FAIL" },
            r.metric,
            r.unit,
            r.threshold
        );
    }
    println!("{}: {} violation(s)", form.label, report.n_violations);
    Ok(report.n_violations as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitWrmsd {
    pub train: f64,
    pub val: f64,
    pub test: Option<f64>,
}

impl SplitWrmsd {
    fn of(ev: &Evaluator, x: &[f64], ds: &Dataset) -> Result<Self> {
        Ok(SplitWrmsd {
            train: ev.wrmsd(x, Split::Train)?,
            val: ev.wrmsd(x, Split::Val)?,
            test: if ds.count(Split::Test) > 0 {
                Some(ev.wrmsd(x, Split::Test)?)
            } else {
                None
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub form: String,
    pub dataset: String,
    pub n_trainable: usize,
    pub initial: SplitWrmsd,
    #[serde(rename = "final")]
    pub fitted: SplitWrmsd,
    pub fit: FitResult,
}

pub fn cmd_fit(form: &Path, dataset: &Path, options: &FitOptions, out: &Path) -> Result<i32> {
    let form = load_form(form)?;
    if form.n_trainable() == 0 {
        return Err(XcError::Precondition(format!("'{}' has no trainable parameters", form.label)));
    }
    let ds = Dataset::load(dataset)?;
    let ev = Evaluator::new(&EnergyModel::new(form.clone()), &ds)?;
    let initial = SplitWrmsd::of(&ev, &ev.initial(), &ds)?;
    let fit = fit_with(&ev, options)?;
    let fitted_form = fit.apply(&form)?;
    let fitted = SplitWrmsd::of(&ev, &fitted_form.trainable_values(), &ds)?;
    save_form(&fitted_form, &out.join("fitted_form.json"))?;
    let report = FitReport {
        form: form.label.clone(),
        dataset: ds.label.clone(),
        n_trainable: form.n_trainable(),
        initial,
        fitted,
        fit,
    };
    write_json(&out.join("fit_report.json"), &report)?;
    println!(
        "{}: train WRMSD {:.6e} -> {:.6e} kcal/mol after {} iterations ({})",
        report.form,
        report.initial.train,
        report.fitted.train,
        report.fit.iterations,
        if report.fit.converged { "converged" } else { "not converged" }
    );
    Ok(0)
}

/// Per-split WRMSD of the seed and the best candidate.
pub fn summary_table(seed: &Candidate, best: Option<&Candidate>) -> String {
    let mut rows = vec![("seed", seed)];
    if let Some(b) = best.filter(|b| b.iteration > 0) {
        rows.push(("best", b));
    }
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut s = String::from("Per-split WRMSD (kcal/mol)\n");
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>10} {:>10} {:>10} {:>3} {:>9}",
        "candidate", "id", "train", "val", "test", "n", "R_evlv"
    );
    for (name, c) in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>10} {:>10} {:>10} {:>3} {:>9.4}",
            name,
            format!("#{}", c.id),
            f(c.j_train),
            f(c.j_val),
            f(c.sealed_test_wrmsd),
            c.n_violations,
            c.penalized_score
        );
    }
    s
}

fn candidates_of(log: &[LogRecord]) -> Vec<&Candidate> {
    log.iter()
        .filter_map(|r| match r {
            LogRecord::Candidate(c) => Some(&c.candidate),
            _ => None,
        })
        .collect()
}

fn best_of<'a>(cands: &[&'a Candidate]) -> Option<&'a Candidate> {
    cands
        .iter()
        .filter(|c| !c.failed())
        .fold(None, |b: Option<&Candidate>, c| match b {
            Some(b) if b.penalized_score >= c.penalized_score => Some(b),
            _ => Some(*c),
        })
}

pub fn cmd_evolve(config: &RunConfig) -> Result<i32> {
    let out = &config.out;
    let dataset = match &config.dataset {
        Some(p) => Dataset::load(p)?,
        None => crate::fit::synthetic_dataset(&config.problem.dataset, &EnergyModel::new(config.problem.truth()))?,
    };
    let fixtures = match &config.fixtures {
        Some(p) => FixtureBundle::load(p)?,
        None => config.problem.fixture_spec().generate()?,
    };
    let mut proposer: Box<dyn Proposer> = match &config.proposer {
        ProposerMode::Scripted => Box::new(config.operators.clone()),
        ProposerMode::External(h) => Box::new(HttpProposer::new(h.clone())?),
    };
    let outcome = run_search(&config.search_config(), &dataset, &fixtures, proposer.as_mut())?;
    write_json(&out.join("config.json"), config)?;
    write_log(out.join("search_log.ndjson"), &outcome.log)?;
    let best = outcome.best_candidate();
    if let Some(b) = best {
        save_form(&b.form, &out.join("best_form.json"))?;
    }
    let table = summary_table(outcome.seed_candidate(), best);
    write_text(&out.join("summary.txt"), &table)?;
    print!("{table}");
    let skips = outcome.log.iter().filter(|r| matches!(r, LogRecord::Skip(_))).count();
    if skips > 0 {
        println!("{skips} iteration(s) skipped after proposer failures");
    }
    Ok(0)
}

pub fn cmd_report(log: &Path) -> Result<i32> {
    let records = read_log(log)?;
    let check = replay(&records)?;
    let cands = candidates_of(&records);
    let seed = cands
        .first()
        .ok_or_else(|| XcError::Data("log holds no candidates".into()))?;
    print!("{}", summary_table(seed, best_of(&cands)));
    let mut ops = std::collections::BTreeMap::<&str, (usize, usize)>::new();
    for c in cands.iter().filter(|c| c.iteration > 0) {
        let e = ops.entry(c.proposer_tag.as_str()).or_default();
        e.0 += 1;
        e.1 += c.failed() as usize;
    }
    println!("replay verified {} selections over {} candidates", check.selections.len(), check.candidates);
    for (op, (n, failed)) in ops {
        println!("{op:<16} {n:>5} attempts {failed:>4} failed fits");
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    let mut config = RunConfig::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    if let Some(o) = cli.out {
        config.out = o;
    }
    config.validate()?;
    if let Some(n) = config.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let out = config.out.clone();
    match cli.command {
        Command::Gen { spec } => cmd_gen(spec.as_deref(), &out),
        Command::Check { form, fixtures } => {
            cmd_check(&form, fixtures.as_deref().or(config.fixtures.as_deref()), &config.constraints, &out)
        }
        Command::Fit { form, dataset } => {
            let dataset = dataset
                .or(config.dataset.clone())
                .ok_or_else(|| XcError::validation("dataset", "no dataset manifest given"))?;
            let mut options = config.optimizer.clone();
            options.seed = config.seed;
            cmd_fit(&form, &dataset, &options, &out)
        }
        Command::Evolve => cmd_evolve(&config),
        Command::Report { log } => cmd_report(&log),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn env_overrides_nest_and_type() {
        let c = RunConfig::load(
            None,
            env(&[
                ("XCFORGE_BUDGET", "7"),
                ("XCFORGE_PROBLEM__DATASET__N_SYSTEMS", "5"),
                ("XCFORGE_OUT", "elsewhere"),
                ("OTHER", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.budget, 7);
        assert_eq!(c.problem.dataset.n_systems, 5);
        assert_eq!(c.problem.dataset.noise_kcal, ProblemSpec::default().dataset.noise_kcal);
        assert_eq!(c.out, PathBuf::from("elsewhere"));
        assert_eq!(c.islands, 4);
    }

    #[test]
    fn bad_config_values_are_rejected() {
        assert!(RunConfig::load(None, env(&[("XCFORGE_EXPLORATION_RATE", "1.5")])).is_err());
        assert!(RunConfig::load(None, env(&[("XCFORGE_ISLANDS", "0")])).is_err());
        let e = RunConfig::load(None, env(&[("XCFORGE_NO_SUCH_KEY", "1")])).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_INPUT);
    }

    #[test]
    fn config_round_trips() {
        let c = RunConfig {
            proposer: ProposerMode::External(HttpSettings::new("http://localhost:9")),
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        let g = GenSpec::default();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<GenSpec>(&text).unwrap(), g);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&XcError::Precondition("x".into())), EXIT_PRECONDITION);
        assert_eq!(exit_code(&XcError::Parse { line: 1, message: "x".into() }), EXIT_INPUT);
        assert_eq!(exit_code(&XcError::Protocol("x".into())), EXIT_INTERNAL);
    }
}
