use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lder")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_train_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    let out = dir.path().join("run");
    let qp = dir.path().join("qp");
    assert!(lder(&["synth", "--n", "2", "--m", "40", "--offset", "3", "--seed", "5", "--out", p(&data)]).status.success());

    let train = stdout_json(&lder(&[
        "train", "--data", p(&data), "--trainer", "dccp", "--r1", "2", "--r2", "2", "--out", p(&out), "--dump-qp", p(&qp),
    ]));
    assert!(train["train_mse"].as_f64().unwrap() <= 1e-2);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trainer"], "dccp");
    assert_eq!(report["versions"]["schema"], 1);
    let dumps = std::fs::read_dir(&qp).unwrap().count();
    assert_eq!(dumps, report["penalty_trace"].as_array().unwrap().len());
    assert!(qp.join("qp_0001.json").exists());

    let eval = stdout_json(&lder(&["eval", "--data", p(&data), "--model", p(&out.join("model.json"))]));
    assert_eq!(eval["mse"].as_f64().unwrap(), train["train_mse"].as_f64().unwrap());
    assert_eq!(eval["n_samples"], 40);
}

#[test]
fn cv_writes_a_fingerprinted_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    assert!(lder(&["synth", "--m", "30", "--offset", "4", "--out", p(&data)]).status.success());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = lder(&[
            "cv", "--data", p(&data), "--trainer", "sgd", "--r1", "2", "--r2", "2", "--sgd.epochs", "50", "--folds", "3",
            "--out", p(&out),
        ]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        let fp = text.lines().find_map(|l| l.strip_prefix("fingerprint ")).unwrap().to_string();
        let rep: Value = serde_json::from_str(&std::fs::read_to_string(out.join("cv.json")).unwrap()).unwrap();
        (fp, rep)
    };
    let (a, rep) = run("a");
    let (b, _) = run("b");
    assert_eq!(a, b);
    assert_eq!(rep["result"]["folds"].as_array().unwrap().len(), 3);
    assert_eq!(rep["config"]["sgd"]["epochs"], 50);
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    let cfg = dir.path().join("cfg.json");
    assert!(lder(&["synth", "--m", "20", "--offset", "4", "--out", p(&data)]).status.success());
    std::fs::write(&cfg, r#"{"r1": 3, "r2": 1, "sgd": {"epochs": 7}}"#).unwrap();
    let out = dir.path().join("run");
    let o = lder(&["train", "--data", p(&data), "--trainer", "sgd", "--config", p(&cfg), "--r2", "2", "--out", p(&out)]);
    assert!(o.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["r1"], 3);
    assert_eq!(report["config"]["r2"], 2);
    assert_eq!(report["iterations"], 7);
}

#[test]
fn errors_are_reported_as_json() {
    let o = lder(&["eval", "--data", "/nonexistent.csv", "--model", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert!(e["error"]["kind"].is_string() && e["error"]["message"].is_string());

    let o = lder(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,y\n1,2\noops,3\n").unwrap();
    let o = lder(&["cv", "--data", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "parse");
    assert_eq!(e["error"]["line"], 3);
    assert_eq!(e["error"]["column"], "a");

    let o = lder(&["bench", "--manifest", "/nonexistent.json", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"]["kind"], "io");
}

#[test]
fn selftest_passes() {
    let o = lder(&["selftest"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(o.status.success(), "{text}");
    assert!(text.lines().count() >= 6 && text.lines().all(|l| l.starts_with("PASS")));
}
