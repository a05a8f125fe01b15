use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn write_spec(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loja-jet")).args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

const VD11_R2: &str = r#"{"function": "x1^2 + flat(x1)", "n_vars": 1, "point": [0], "r": 2, "sigma": {"type": "point"}}"#;

#[test]
fn decide_vd11_r2_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "p.json", VD11_R2);
    let out = run(&["decide", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc = report(&out);
    assert_eq!(doc["schema"], "loja-jet/1");
    let status = doc["result"]["status"].as_str().unwrap();
    assert!(status == "certified_min" || status == "empirical_min", "{status}");
    assert_eq!(doc["provenance"]["seed"], 42);
}

#[test]
fn loja_gradient_on_paraboloid() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "p.json", r#"{"function": "x1^2+x2^2", "n_vars": 2, "r": 2}"#);
    let out = run(&["loja", "--condition", "iii", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let c = report(&out)["result"]["estimate"]["c_hat"].as_f64().unwrap();
    assert!((c - 2.0).abs() < 1e-9, "{c}");
}

#[test]
fn malformed_function_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "p.json", r#"{"function": "x1^2 + * x2", "n_vars": 2, "r": 2}"#);
    let out = run(&["decide", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("function") && err.contains("position 7"), "{err}");
}

#[test]
fn schema_violation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "p.json", r#"{"function": "x1", "n_vars": 1, "r": "two"}"#);
    let out = run(&["jet", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`r`"));
}

#[test]
fn uncovered_critical_set_exits_two() {
    // critical points fill the x2 axis but Σ is the origin only
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "p.json", r#"{"function": "x1^2", "n_vars": 2, "r": 2}"#);
    let out = run(&["decide", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let doc = report(&out);
    assert_eq!(doc["result"]["status"], "undecided");
    assert!(doc["result"]["reason"].is_string());
}

#[test]
fn missing_spec_and_unknown_example_exit_one() {
    assert_eq!(run(&["decide"]).status.code(), Some(1));
    assert_eq!(run(&["reproduce", "--example", "nope"]).status.code(), Some(1));
}

#[test]
fn reports_are_deterministic_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "p.json",
        r#"{"function": "x1^3 - 3*x1*x2^3 + flat(x2)", "n_vars": 2, "r": 4}"#,
    );
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = run(&["decide", "--seed", "7", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let load = |p: &Path| {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        assert!(v.get("timestamp").is_some());
        loja_jet_cli::strip_timestamp(&mut v);
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(load(&a), load(&b));
    assert!(load(&a).contains("\"seed\":7"));
}

#[test]
fn perturb_and_sigma_and_jet_commands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "p.json",
        r#"{"function": "x1^2+x2^2", "n_vars": 2, "r": 2,
            "perturbation": {"h": "0.4*(x1^2+x2^2)*cos(x1)", "epsilon": 0.4}}"#,
    );
    let s = spec.to_str().unwrap();
    let doc = report(&run(&["perturb", "--spec", s]));
    assert_eq!(doc["result"]["h_bound_ok"], true);
    assert_eq!(doc["result"]["combined_min_empirical"], true);
    let doc = report(&run(&["sigma", "--spec", s]));
    assert_eq!(doc["result"]["coverage"]["covered"], true);
    let doc = report(&run(&["jet", "--spec", s]));
    assert_eq!(doc["result"]["degree"], 2);
}

#[test]
fn reproduce_single_example_passes() {
    let out = run(&["reproduce", "--example", "vd11_i_r3"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = report(&out);
    assert_eq!(doc["result"]["pass"], true);
    assert_eq!(doc["result"]["examples"][0]["observed"], "certified_not_min");
}
