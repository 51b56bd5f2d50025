use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use xcforge::cli::{EXIT_INPUT, EXIT_PRECONDITION};
use xcforge::forms::{canonical_baseline, FunctionalForm};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_xcforge"));
    c.env_remove("RUST_LOG");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().arg("--out").arg(out).args(args).output().expect("spawn xcforge")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// One `gen` output tree shared by every test in this file.
fn generated() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["gen"], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        dir
    })
    .path()
}

fn p(rel: &str) -> PathBuf {
    generated().join(rel)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_writes_forms_and_manifests() {
    for rel in [
        "fixtures/bundle.json",
        "dataset/dataset.json",
        "recovery/dataset.json",
        "forms/baseline.json",
        "forms/safs26a.json",
        "forms/safs26b.json",
        "forms/violating/composite.json",
        "gen_spec.json",
    ] {
        assert!(p(rel).is_file(), "{rel}");
    }
    assert_eq!(FunctionalForm::load(p("forms/baseline.json")).unwrap(), canonical_baseline());
}

#[test]
fn check_exit_status_counts_violations() {
    let out = tempfile::tempdir().unwrap();
    let fixtures = p("fixtures/bundle.json");
    let ok = run(&["check", s(&p("forms/baseline.json")), "--fixtures", s(&fixtures)], out.path());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.path().join("constraint_report.json").is_file());
    let bad = run(&["check", s(&p("forms/violating/composite.json")), "--fixtures", s(&fixtures)], out.path());
    assert_eq!(code(&bad), 4);
}

#[test]
fn bad_input_exits_with_input_code() {
    let out = tempfile::tempdir().unwrap();
    let missing = run(&["check", "/nonexistent/form.json"], out.path());
    assert_eq!(code(&missing), EXIT_INPUT);

    let junk = out.path().join("junk.json");
    std::fs::write(&junk, "{ not json").unwrap();
    let o = run(&["check", s(&junk), "--fixtures", s(&p("fixtures/bundle.json"))], out.path());
    assert_eq!(code(&o), EXIT_INPUT);

    let cfg = out.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let o = bin().arg("--config").arg(&cfg).arg("--out").arg(out.path()).arg("report").arg(&junk).output().unwrap();
    assert_eq!(code(&o), EXIT_INPUT);

    assert_eq!(code(&run(&["no-such-command"], out.path())), EXIT_INPUT);
}

#[test]
fn fitting_a_frozen_form_is_a_precondition_error() {
    let out = tempfile::tempdir().unwrap();
    let mut form = canonical_baseline();
    form.trainable_mask.iter_mut().for_each(|m| *m = false);
    let path = out.path().join("frozen.json");
    form.save(&path).unwrap();
    let o = run(&["fit", s(&path), "--dataset", s(&p("recovery/dataset.json"))], out.path());
    assert_eq!(code(&o), EXIT_PRECONDITION);
}

#[test]
fn fit_writes_a_loadable_form() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["fit", s(&p("forms/baseline.json")), "--dataset", s(&p("recovery/dataset.json"))], out.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fitted = FunctionalForm::load(out.path().join("fitted_form.json")).unwrap();
    assert_eq!(fitted.n_trainable(), 12);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("fit_report.json")).unwrap()).unwrap();
    let initial = report["initial"]["train"].as_f64().unwrap();
    let last = report["final"]["train"].as_f64().unwrap();
    assert!(last < initial, "{initial} -> {last}");
}

const SMALL_RUN: &str = r#"{
  "budget": 3,
  "islands": 2,
  "migration_period": 2,
  "problem": {"dataset": {"n_systems": 4, "n_reactions": 16}, "n_proxies": 1},
  "evolution_optimizer": {"max_iterations": 5}
}"#;

fn evolve(dir: &Path, extra_env: &[(&str, &str)]) -> Output {
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let mut c = bin();
    c.arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).arg("evolve");
    for (k, v) in extra_env {
        c.env(k, v);
    }
    c.output().unwrap()
}

#[test]
fn evolve_is_reproducible_and_replays() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = evolve(a.path(), &[]);
    assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(code(&evolve(b.path(), &[])), 0);
    let log_a = std::fs::read(a.path().join("out/search_log.ndjson")).unwrap();
    let log_b = std::fs::read(b.path().join("out/search_log.ndjson")).unwrap();
    assert_eq!(log_a, log_b);
    for f in ["config.json", "best_form.json", "summary.txt"] {
        assert!(a.path().join("out").join(f).is_file(), "{f}");
    }
    let r = run(&["report", s(&a.path().join("out/search_log.ndjson"))], a.path());
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn env_overrides_layer_over_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = evolve(dir.path(), &[("XCFORGE_BUDGET", "0")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["budget"], 0);
    assert_eq!(cfg["islands"], 2);
    assert_eq!(cfg["problem"]["dataset"]["n_systems"], 4);
    assert!(cfg["problem"]["dataset"]["noise_kcal"].as_f64().unwrap() > 0.0);
}
