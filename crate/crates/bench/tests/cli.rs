use std::path::Path;
use std::process::{Command, Output};

fn smoothrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothrl")).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

fn train_small(out: &Path) -> Output {
    smoothrl(&[
        "train",
        "--env",
        "pendulum",
        "--method",
        "vanilla",
        "--seeds",
        "1",
        "--steps",
        "1000",
        "--eval-episodes",
        "3",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn train_writes_one_record_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_small(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<_> = std::fs::read_dir(dir.path().join("records")).unwrap().collect();
    assert_eq!(records.len(), 1);
    let text = std::fs::read_to_string(dir.path().join("records/pendulum__vanilla__seed0.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    let rec: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(rec["train_steps"], 1000);
    assert_eq!(rec["episodes"], 3);
    assert!(dir.path().join("report.txt").is_file());
    assert!(dir.path().join("report.csv").is_file());
    assert!(dir.path().join("config.toml").is_file());
    assert!(dir.path().join("curves/pendulum__vanilla.svg").is_file());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("trained 1, skipped 0"), "{stdout}");

    // Regenerating the report from records is byte-identical.
    let before = std::fs::read(dir.path().join("report.csv")).unwrap();
    let before_txt = std::fs::read(dir.path().join("report.txt")).unwrap();
    let again = smoothrl(&["report", "--out", dir.path().to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(std::fs::read(dir.path().join("report.csv")).unwrap(), before);
    assert_eq!(std::fs::read(dir.path().join("report.txt")).unwrap(), before_txt);

    // Eval and trace on the written checkpoint.
    let ck = dir.path().join("checkpoints/pendulum__vanilla__seed0.json");
    let ev = smoothrl(&["eval", "--checkpoint", ck.to_str().unwrap(), "--episodes", "2"]);
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    let v: serde_json::Value = serde_json::from_slice(&ev.stdout).unwrap();
    assert_eq!(v["env"], "pendulum");
    assert_eq!(v["episodes"], 2);
    assert!(v["sm_mean"].as_f64().unwrap() >= 0.0);
    assert!(v["return_mean"].as_f64().unwrap() <= 0.0);

    let trace = dir.path().join("trace.csv");
    let spec = dir.path().join("spec");
    let tr = smoothrl(&[
        "trace",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        trace.to_str().unwrap(),
        "--spectrum",
        spec.to_str().unwrap(),
    ]);
    assert!(tr.status.success(), "{}", String::from_utf8_lossy(&tr.stderr));
    let t: serde_json::Value = serde_json::from_slice(&tr.stdout).unwrap();
    assert_eq!(t["steps"], 200);
    let rows = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(rows.lines().count(), 201);
    let sp = std::fs::read_to_string(dir.path().join("spec.dim0.csv")).unwrap();
    assert!(sp.starts_with("freq_hz,amplitude"));
    assert_eq!(sp.lines().count(), 1 + 100);
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = smoothrl(&["train", "--method", "liu+caps", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "usage");
    let msg = err["message"].as_str().unwrap();
    for m in ["vanilla", "caps", "l2c2", "local_sn", "liu", "lipsnet+caps", "lipsnet+l2c2"] {
        assert!(msg.contains(m), "{msg}");
    }
    assert!(!dir.path().join("records").exists());
}

#[test]
fn bad_flags_and_inputs_exit_with_json() {
    let out = smoothrl(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = smoothrl(&["train", "--env", "cartpole"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let out = smoothrl(&["report", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("nope.json");
    let out = smoothrl(&["eval", "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("nope.json"));

    let help = smoothrl(&["--help"]);
    assert!(help.status.success());
}
