use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn neurotree(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurotree"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn fom_prints_table_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = neurotree(
        &["fom", "--power-per-ch", "6.45e-6", "--area-per-ch", "0.031", "--fs", "5000"],
        dir.path(),
    );
    assert!(ok(&out).contains("40.0 pJ"));
}

#[test]
fn train_and_simulate_are_byte_identical_across_runs() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        ok(&neurotree(
            &["train", "--synthetic", "--seed", "42", "--c", "0.01", "--out", "m"],
            dir.path(),
        ));
        ok(&neurotree(
            &["simulate", "--model-path", "m/model.json", "--synthetic", "--seed", "42", "--out", "s"],
            dir.path(),
        ));
        let files = ["m/model.json", "m/train_log.json", "s/trace.csv", "s/summary.json"]
            .map(|f| fs::read(dir.path().join(f)).unwrap());
        (dir, files)
    };
    let (dir, first) = run();
    let (_, second) = run();
    assert!(first == second, "outputs differ between identical runs");

    let log: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("m/train_log.json")).unwrap()).unwrap();
    assert_eq!(log["config"]["c"], 0.01);
    assert_eq!(log["source"]["synthetic"]["seed"], 42);
    assert_eq!(log["costs"]["Delta"]["power_nw"], 250.6);
    let trace = fs::read_to_string(dir.path().join("s/trace.csv")).unwrap();
    assert!(trace.starts_with("tick,time_s,score,decision,power_nw_cum\n"));
    assert!(!dir.path().join("m/.model.json.tmp").exists());
}

#[test]
fn csv_input_matches_synthetic_generation() {
    let dir = tempfile::tempdir().unwrap();
    ok(&neurotree(&["gen-data", "--seed", "42", "--out", "d"], dir.path()));
    ok(&neurotree(&["train", "--input", "d/recording.csv", "--out", "a"], dir.path()));
    ok(&neurotree(&["train", "--synthetic", "--seed", "42", "--out", "b"], dir.path()));
    assert_eq!(
        fs::read(dir.path().join("a/model.json")).unwrap(),
        fs::read(dir.path().join("b/model.json")).unwrap()
    );
    let report = ok(&neurotree(&["report", "--model-path", "a/model.json"], dir.path()));
    assert!(report.contains("feature,channel,count,expected_per_window"));
    assert!(report.contains("model_size_bytes: "));
}

#[test]
fn sweep_writes_one_row_per_c() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&neurotree(
        &["sweep", "--synthetic", "--seed", "42", "--c", "0,0.001,0.01,0.1", "--out", "sw"],
        dir.path(),
    ));
    assert!(stdout.contains("knee C = "));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "C,f1,sensitivity,specificity,mean_power_nw,mean_latency_s,model_bytes");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn oblique_pipeline_and_schemes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&neurotree(
        &["train", "--synthetic", "--seed", "42", "--model", "oblique", "--k", "8", "--frac-bits", "10", "--out", "o"],
        dir.path(),
    ));
    let model = fs::read_to_string(dir.path().join("o/model.json")).unwrap();
    assert!(model.contains("\"oblique\""));
    for scheme in ["single", "layers:1-2,3-4", "full"] {
        ok(&neurotree(
            &["simulate", "--model-path", "o/model.json", "--synthetic", "--seed", "42", "--scheme", scheme, "--out", "so"],
            dir.path(),
        ));
    }
    let bad = neurotree(
        &["simulate", "--model-path", "o/model.json", "--synthetic", "--seed", "42", "--scheme", "layers:1-2", "--out", "so"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| neurotree(args, dir.path()).status.code();

    assert_eq!(code(&["train", "--synthetic", "--out", "x"]), Some(2));
    assert_eq!(code(&["train", "--bogus"]), Some(2));
    assert_eq!(code(&["train", "--synthetic", "--seed", "1", "--c", "x", "--out", "x"]), Some(2));
    assert_eq!(code(&["fom", "--power-per-ch", "-1", "--area-per-ch", "1", "--fs", "1"]), Some(2));

    assert_eq!(code(&["train", "--input", "missing.csv", "--out", "x"]), Some(3));
    fs::write(dir.path().join("bad.csv"), "time_s,ch0,label\n0,abc,0\n").unwrap();
    assert_eq!(code(&["train", "--input", "bad.csv", "--out", "x"]), Some(3));
    fs::write(dir.path().join("bad.json"), "{}").unwrap();
    assert_eq!(code(&["report", "--model-path", "bad.json"]), Some(3));

    assert_eq!(
        code(&[
            "train", "--synthetic", "--seed", "42", "--model", "oblique", "--learning-rate", "1e200", "--epochs", "5",
            "--out", "x"
        ]),
        Some(4)
    );
    let stderr = String::from_utf8(
        neurotree(&["train", "--input", "missing.csv", "--out", "x"], dir.path()).stderr,
    )
    .unwrap();
    assert!(stderr.contains("missing.csv"));
}

#[test]
fn cost_table_override_reaches_the_log() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("costs.toml"), "[Delta]\npower_nw = 500.0\n").unwrap();
    ok(&neurotree(
        &["train", "--synthetic", "--seed", "42", "--cost-table", "costs.toml", "--out", "m"],
        dir.path(),
    ));
    let log: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("m/train_log.json")).unwrap()).unwrap();
    assert_eq!(log["costs"]["Delta"]["power_nw"], 500.0);
    fs::write(dir.path().join("costs.toml"), "[Delta]\nwatts = 1\n").unwrap();
    let out = neurotree(
        &["train", "--synthetic", "--seed", "42", "--cost-table", "costs.toml", "--out", "m"],
        dir.path(),
    );
    assert_ne!(out.status.code(), Some(0));
}
