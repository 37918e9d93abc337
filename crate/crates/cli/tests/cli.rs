use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tgx");

fn tgx(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = tgx(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn generate(dir: &Path, seed: &str) {
    ok(&["generate", "--timestamps", "5", "--per-ts", "10", "--seed", seed, "--out", dir.to_str().unwrap()]);
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, "5");
    generate(&b, "5");
    for f in ["events.csv", "instances.csv", "meta.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let instances = std::fs::read_to_string(a.join("instances.csv")).unwrap();
    assert_eq!(instances.lines().count(), 51);
}

#[test]
fn explain_single_event_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    std::fs::create_dir(&ds).unwrap();
    std::fs::write(ds.join("events.csv"), "src,dst,ts,label,f_0,f_1\n1,0,1,0,0.5,2\n2,3,1,0,1,1\n").unwrap();
    std::fs::write(ds.join("instances.csv"), "instance,src,dst,t,label,marker_node,marker_event\n0,0,4,3,0,,\n").unwrap();
    std::fs::write(ds.join("meta.json"), r#"{"task":"regression","num_nodes":5,"feature_dim":2}"#).unwrap();
    let out = tmp.path().join("out");
    ok(&["explain", "--dataset", ds.to_str().unwrap(), "--instance", "0", "--feature", "--out", out.to_str().unwrap()]);
    let v = json(&out.join("explanations.json"));
    let ex = &v["explanations"][0];
    assert_eq!(ex["events"].as_array().unwrap().len(), 1);
    assert_eq!(ex["events"][0]["phi"], ex["grand_value"]);
    let players = ex["features"][0]["players"].as_array().unwrap();
    assert_eq!(players.len(), 4);
}

#[test]
fn explain_rejects_unknown_event() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "1");
    let out = tgx(&["explain", "--dataset", ds.to_str().unwrap(), "--event", "999999", "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn explain_is_efficient() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "2");
    let out = tmp.path().join("out");
    ok(&["explain", "--dataset", ds.to_str().unwrap(), "--instances", "4", "--kernel-budget", "64", "--out", out.to_str().unwrap()]);
    let v = json(&out.join("explanations.json"));
    let exs = v["explanations"].as_array().unwrap();
    assert_eq!(exs.len(), 4);
    for ex in exs {
        let sum: f64 = ex["events"].as_array().unwrap().iter().map(|e| e["phi"].as_f64().unwrap()).sum();
        let total = ex["base_value"].as_f64().unwrap() + sum;
        assert!((total - ex["grand_value"].as_f64().unwrap()).abs() < 1e-9);
    }
}

fn evaluate(ds: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["evaluate", "--dataset", ds.to_str().unwrap(), "--instances", "6", "--kernel-budget", "64"];
    args.extend_from_slice(&["--sparsities", "0:1:0.25", "--out", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    tgx(&args)
}

#[test]
fn evaluate_single_metric_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "4");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(evaluate(&ds, &a, &["--metrics", "fidelity", "--workers", "1"]).status.success());
    assert!(evaluate(&ds, &b, &["--metrics", "fidelity", "--workers", "4"]).status.success());
    let report = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(report, std::fs::read(b.join("report.json")).unwrap());
    let v: Value = serde_json::from_slice(&report).unwrap();
    let auc = v["auc"].as_object().unwrap();
    assert_eq!(auc.keys().collect::<Vec<_>>(), ["fidelity"]);
    assert!(auc["fidelity"].as_f64().unwrap() <= 0.0);
    assert!(a.join("curve_fidelity.csv").exists());
}

#[test]
fn evaluate_plot_and_missing_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "6");
    let out = tmp.path().join("o");
    assert!(evaluate(&ds, &out, &["--plot"]).status.success());
    assert!(std::fs::read_to_string(out.join("curves.svg")).unwrap().starts_with("<svg"));

    let bad = evaluate(&tmp.path().join("missing"), &tmp.path().join("x"), &[]);
    assert!(!bad.status.success());
}

#[test]
fn selftest_exit_codes() {
    let pass = tgx(&["selftest", "--quick"]);
    assert!(pass.status.success(), "{}", String::from_utf8_lossy(&pass.stderr));
    let fail = tgx(&["selftest", "--quick", "--inject-fault"]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stderr).contains("FAIL"));
}

#[test]
fn external_model_matches_builtin() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "8");
    let run = |model: &str, dir: &str| {
        let out = tmp.path().join(dir);
        ok(&["explain", "--dataset", ds.to_str().unwrap(), "--model", model, "--instances", "2", "--kernel-budget", "32", "--out", out.to_str().unwrap()]);
        json(&out.join("explanations.json"))["explanations"].clone()
    };
    let builtin = run("builtin:toy", "b");
    let external = run(&format!("external:{BIN} serve"), "e");
    assert_eq!(builtin, external);
}
