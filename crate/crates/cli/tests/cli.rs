use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use c0_estimate::grid::{ScalarField, TorusGrid};
use serde_json::Value;
use tempfile::TempDir;

fn c0est(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_c0est")).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn run(dir: &Path, command: &str, config: Option<&str>, extra: &[&str]) -> i32 {
    let out = dir.join("out");
    let mut args = vec![command.to_string(), "--out".into(), out.display().to_string()];
    if let Some(text) = config {
        let path = dir.join("config.toml");
        fs::write(&path, text).unwrap();
        args.extend(["--config".into(), path.display().to_string()]);
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    c0est(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

fn assert_valid(schema: &str, value: &Value) {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "schemas", &format!("{schema}.schema.json")].iter().collect();
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

const FLAT_ZERO: &str = r#"
operator = "ma"
p = 3.0
metric = { kind = "flat", scale = 1.0 }
metric_h = { kind = "flat", scale = 1.0 }

[grid]
n = 2
N = 8

[forcing]
source = "family"
family = { kind = "zero" }
parameters = [0.0]
"#;

#[test]
fn default_pointwise_check_passes_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "check-pointwise", None, &["--seed", "11"]), 0);
    let first = fs::read(dir.path().join("out/check_pointwise.json")).unwrap();
    assert_eq!(run(dir.path(), "check-pointwise", None, &["--seed", "11"]), 0);
    assert_eq!(first, fs::read(dir.path().join("out/check_pointwise.json")).unwrap());
    let report = json(dir.path(), "check_pointwise.json");
    assert_valid("check_pointwise", &report);
    assert_eq!(report["suites"].as_array().unwrap().len(), 7);
}

#[test]
fn entropy_exponent_must_exceed_dimension() {
    let dir = TempDir::new().unwrap();
    let bad = FLAT_ZERO.replace("p = 3.0", "p = 2.0");
    assert_eq!(run(dir.path(), "check-pointwise", Some(&bad), &[]), 2);
    assert_eq!(run(dir.path(), "solve", Some("operator = \"ma\"\n"), &[]), 2);
    assert_eq!(run(dir.path(), "solve", Some(&FLAT_ZERO.replace("\"ma\"", "\"hessian(7)\"")), &[]), 2);
    assert_eq!(c0est(&["solve", "--grid", "many"]), 2);
}

#[test]
fn zero_forcing_solves_to_zero() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "solve", Some(FLAT_ZERO), &[]), 0);
    let report = json(dir.path(), "solve.json");
    assert_valid("solve", &report);
    assert_eq!(report["sup_norm"], 0.0);
    assert_eq!(report["b"], 0.0);
    let grid = TorusGrid::new(2, 8, 1.0).unwrap();
    let phi = ScalarField::read_binary(&grid, &fs::read(dir.path().join("out/phi.bin")).unwrap()).unwrap();
    assert_eq!(phi.sup_norm(), 0.0);
    let csv = fs::read_to_string(dir.path().join("out/phi.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4096 + 1);
    assert!(fs::read_to_string(dir.path().join("out/history.csv")).unwrap().starts_with("iteration"));
}

#[test]
fn manufactured_solve_recovers_potential() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "solve", None, &["--tol", "1e-10"]), 0);
    let report = json(dir.path(), "solve.json");
    assert_valid("solve", &report);
    let h2 = (1.0f64 / 12.0).powi(2);
    assert!(report["manufactured"]["sup_error"].as_f64().unwrap() <= 0.2 * h2);
    assert!(report["manufactured"]["b_error"].as_f64().unwrap() <= 0.05 * h2);
    assert!(report["residual_sup"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn wild_forcing_exits_with_non_convergence() {
    let dir = TempDir::new().unwrap();
    let wild = FLAT_ZERO
        .replace("family = { kind = \"zero\" }", "family = { kind = \"band_limited\", max_mode = 3 }")
        .replace("parameters = [0.0]", "parameters = [40.0]")
        + "\n[tolerances]\nmax_iterations = 4\n";
    assert_eq!(run(dir.path(), "solve", Some(&wild), &["--seed", "5"]), 3);
    let report = json(dir.path(), "solve.json");
    assert_valid("solve", &report);
    assert_eq!(report["converged"], false);
    assert!(report["error"].is_string());
}

#[test]
fn localize_emits_one_report_per_pair() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "localize", None, &["--workers", "3"]), 0);
    let report = json(dir.path(), "localize.json");
    assert_valid("localize", &report);
    let entries = report["report"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 6);
    for e in entries {
        let name = format!("comparison_s{}_k{}.json", e["s_fraction"], e["k"]);
        assert_valid("comparison", &json(dir.path(), &name));
    }
    let csv = fs::read_to_string(dir.path().join("out/comparisons.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn constant_sweep_has_zero_rows_and_summarizes() {
    let dir = TempDir::new().unwrap();
    let config = FLAT_ZERO
        .replace("family = { kind = \"zero\" }", "family = { kind = \"constant\" }")
        .replace("parameters = [0.0]", "parameters = [-0.5, 0.0, 0.5]");
    assert_eq!(run(dir.path(), "sweep", Some(&config), &["--workers", "2"]), 0);
    let report = json(dir.path(), "sweep.json");
    assert_valid("sweep", &report);
    for row in report["summary"]["rows"].as_array().unwrap() {
        assert!(row["sup_norm"].as_f64().unwrap() <= 1e-12);
    }
    assert_eq!(fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap().lines().count(), 4);

    assert_eq!(run(dir.path(), "solve", Some(FLAT_ZERO), &[]), 0);
    assert_eq!(c0est(&["report", "--out", &dir.path().join("out").display().to_string()]), 0);
    let summary = json(dir.path(), "report.json");
    assert_valid("report", &summary);
    assert_eq!(summary["sections"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_requires_a_family() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "sweep", None, &[]), 2);
    assert_eq!(c0est(&["report", "--out", &dir.path().join("empty").display().to_string()]), 2);
}
