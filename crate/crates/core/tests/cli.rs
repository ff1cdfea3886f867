use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsm")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = rsm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let t = TempDir::new().unwrap();
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    synth(&a, &["--seed", "4", "--clicks", "500"]);
    synth(&b, &["--seed", "4", "--clicks", "500"]);
    synth(&c, &["--seed", "5", "--clicks", "500"]);
    let read = |d: &Path| fs::read(d.join("dataset.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));

    let m = json(&a.join("manifest.json"));
    assert_eq!(m["data_file"], "dataset.csv");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["spec"]["true_weights"], serde_json::json!([0.5, 0.3, 0.2]));
    assert_eq!(m["schema"]["features"].as_array().unwrap().len(), 3);
}

#[test]
fn train_recovers_planted_weights() {
    let t = TempDir::new().unwrap();
    synth(t.path(), &["--seed", "11", "--queries", "30"]);
    let manifest = t.path().join("manifest.json");
    let out = t.path().join("fit");
    ok(&["train", "--manifest", manifest.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    let w = json(&out.join("weights.json"));
    assert_eq!(w["method"], "fit");
    assert_eq!(w["converged"], true);
    let got: Vec<f64> = w["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (g, truth) in got.iter().zip([0.5, 0.3, 0.2]) {
        assert!((g - truth).abs() < 1e-3, "{got:?}");
    }
    let log = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(log.starts_with("iteration,loss\n"));
    assert!(log.lines().count() > 2);
}

#[test]
fn train_grid_and_iteration_cap() {
    let t = TempDir::new().unwrap();
    synth(t.path(), &["--seed", "2", "--queries", "10", "--weights", "0.6,0.4"]);
    let manifest = t.path().join("manifest.json");
    let g = t.path().join("grid");
    ok(&["train", "--manifest", manifest.to_str().unwrap(), "--out-dir", g.to_str().unwrap(), "--grid", "--grid-step", "0.1"]);
    let w = json(&g.join("weights.json"));
    assert_eq!(w["method"], "grid");
    assert_eq!(w["weights"], serde_json::json!([0.6, 0.4]));

    let capped = t.path().join("capped");
    ok(&["train", "--manifest", manifest.to_str().unwrap(), "--out-dir", capped.to_str().unwrap(), "--max-iters", "0", "--random-init", "--seed", "3"]);
    let w = json(&capped.join("weights.json"));
    assert_eq!(w["converged"], false);
    assert_eq!(w["iterations"], 0);
}

#[test]
fn eval_constant_only_and_sweep() {
    let t = TempDir::new().unwrap();
    synth(t.path(), &["--seed", "8", "--queries", "12", "--catalog", "7", "--contexts-per-query", "5", "--clicks", "2000", "--position"]);
    let manifest = t.path().join("manifest.json");
    let one = t.path().join("one");
    ok(&["eval", "--manifest", manifest.to_str().unwrap(), "--out-dir", one.to_str().unwrap(), "--models", "constant", "--splits", "4"]);
    let r = json(&one.join("report.json"));
    assert_eq!(r["models"][0]["name"], "constant");
    assert_eq!(r["models"][0]["mean"], 0.5);

    let sweep = t.path().join("sweep");
    let out = ok(&[
        "eval", "--manifest", manifest.to_str().unwrap(), "--out-dir", sweep.to_str().unwrap(),
        "--models", "rsm,ls", "--splits", "3", "--lambda-sweep", "0.1,0.15,0.3",
    ]);
    let r = json(&sweep.join("report.json"));
    let lambdas: Vec<f64> = r.as_array().unwrap().iter().map(|x| x["lambda"].as_f64().unwrap()).collect();
    assert_eq!(lambdas, [0.1, 0.15, 0.3]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.matches("lambda").count(), 3);
    let csv = fs::read_to_string(sweep.join("report_splits.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 3);
}

#[test]
fn demo_prints_both_routes() {
    let out = ok(&["demo-shredder"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("A"));
    assert!(text.to_lowercase().contains("restrict"));
}

#[test]
fn exit_codes_separate_config_and_data_errors() {
    let t = TempDir::new().unwrap();
    let dir = t.path().to_str().unwrap();
    // weights that do not sum to one
    assert_eq!(rsm(&["synth", "--out-dir", dir, "--weights", "0.5,0.6"]).status.code(), Some(2));
    assert_eq!(rsm(&["demo-shredder", "--lambda", "1.5"]).status.code(), Some(2));

    let csv = t.path().join("bad.csv");
    fs::write(&csv, "query_id,context_id,item_id,position,clicks\n").unwrap();
    let schema = t.path().join("schema.json");
    fs::write(&schema, r#"{"features":[{"name":"price","kind":"numeric","direction":"lower_is_better"}],"use_position":false}"#).unwrap();
    let out = rsm(&["train", "--data", csv.to_str().unwrap(), "--schema", schema.to_str().unwrap(), "--out-dir", dir]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let missing = t.path().join("missing.json");
    assert_eq!(rsm(&["train", "--manifest", missing.to_str().unwrap(), "--out-dir", dir]).status.code(), Some(3));
}
