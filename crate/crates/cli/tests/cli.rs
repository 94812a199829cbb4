use std::fs;
use std::process::{Command, Output};

fn mfee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfee"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn replay_baseline_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay.jsonl");
    let baselines = dir.path().join("baselines.jsonl");
    let runs = dir.path().join("runs");
    let (r, b, o) = (
        replay.to_str().unwrap(),
        baselines.to_str().unwrap(),
        runs.to_str().unwrap(),
    );

    let out = mfee(&[
        "gen-replay",
        "--mix",
        "factual=20,redundant=10,safety=5",
        "--seed",
        "7",
        "--out",
        r,
    ]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(fs::read_to_string(&replay).unwrap().lines().count(), 35);

    assert!(mfee(&["gen-baseline", "--replay", r, "--out", b])
        .status
        .success());
    let first = fs::read_to_string(&baselines).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    let mut keys: Vec<_> = line.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(
        keys,
        [
            "baseline_output",
            "prompt",
            "request_id",
            "seed",
            "temperature",
            "timestamp"
        ]
    );

    let out = mfee(&["eval", "--replay", r, "--baselines", b, "--out", o]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("programmatic validation"));
    let run = fs::read_dir(&runs).unwrap().next().unwrap().unwrap().path();
    assert!(run.file_name().unwrap().to_str().unwrap().starts_with("run-"));
    for f in ["records.jsonl", "report.json", "report.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(run.join("records.jsonl"))
            .unwrap()
            .lines()
            .count(),
        35
    );
}

#[test]
fn parallel_eval_refuses_redundant_entries() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("r.jsonl");
    let baselines = dir.path().join("b.jsonl");
    let (r, b) = (replay.to_str().unwrap(), baselines.to_str().unwrap());
    assert!(mfee(&["gen-replay", "--mix", "redundant=4", "--out", r])
        .status
        .success());
    assert!(mfee(&["gen-baseline", "--replay", r, "--out", b])
        .status
        .success());
    let out = mfee(&[
        "eval",
        "--replay",
        r,
        "--baselines",
        b,
        "--threads",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_mix_category_is_rejected() {
    let out = mfee(&["gen-replay", "--mix", "poetry=3"]);
    assert!(!out.status.success());
}

#[test]
fn compare_routers_table() {
    let out = mfee(&["compare-routers"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for router in ["keyword", "cache_only", "intent", "gate"] {
        assert!(text.contains(router), "{router}");
    }
    assert!(text.contains("100.0%"));
}

#[test]
fn frontier_check_reports_and_bounds_k() {
    let out = mfee(&["frontier-check", "--k", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("k3_support_desk"));
    assert!(!text.contains("k4_mixed"));
    assert!(!text.contains("VIOLATED"));
    assert!(!mfee(&["frontier-check", "--k", "5"]).status.success());
}

#[test]
fn temporal_bundled_trace() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("t.json");
    let out = mfee(&["temporal", "--out", json.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("avoided              17 (73.9%)"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["baseline_calls"], 23);
}

#[test]
fn unknown_backend_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("r.jsonl");
    let r = replay.to_str().unwrap();
    assert!(mfee(&["gen-replay", "--mix", "trivial=2", "--out", r])
        .status
        .success());
    assert_eq!(
        mfee(&["gen-baseline", "--replay", r, "--backend", "gpu"])
            .status
            .code(),
        Some(2)
    );
}
