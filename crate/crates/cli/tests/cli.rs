use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use probe_mission::autonomy::{run_trial, Team};
use probe_mission::io::{events_json, trajectory_csv};
use probe_mission::Scenario;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probe-mission")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_matches_library_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["run", "--team", "2", "--seed", "7", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let record = run_trial(&Scenario::default(), Team::Two, 7).unwrap();
    assert_eq!(std::fs::read(dir.path().join("trajectory.csv")).unwrap(), trajectory_csv(&record).unwrap());
    assert_eq!(std::fs::read_to_string(dir.path().join("events.json")).unwrap(), events_json(&record));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outcome"], "SUCCESS");
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
}

#[test]
fn explicit_scenario_file_matches_builtin() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let path = scenario_path("default.json");
    assert_eq!(code(&cli(&["run", "--team", "1", "--seed", "3", "--out", s(a.path())])), 0);
    assert_eq!(code(&cli(&["run", "--scenario", s(&path), "--team", "1", "--seed", "3", "--out", s(b.path())])), 0);
    assert_eq!(
        std::fs::read(a.path().join("trajectory.csv")).unwrap(),
        std::fs::read(b.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn failed_mission_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_path("low_feature.json");
    let out = cli(&["run", "--scenario", s(&path), "--team", "1", "--seed", "0", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(dir.path().join("trajectory.csv").is_file());
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["run", "--team", "3", "--out", s(dir.path())])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(code(&cli(&["batch", "--team", "1", "--trials", "0", "--out", s(dir.path())])), 1);

    let out = cli(&["run", "--scenario", "/no/such/scenario.json", "--team", "1", "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/no/such/scenario.json"), "{}", stderr(&out));
}

#[test]
fn invalid_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "team1": { "search_spacing": -5.0 } }"#).unwrap();
    let out = cli(&["run", "--scenario", s(&path), "--team", "1", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("team1.search_spacing"), "{}", stderr(&out));
}

#[test]
fn help_exits_0() {
    let out = cli(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("batch"));
}

#[test]
fn batch_layout_and_analyze() {
    let root = tempfile::tempdir().unwrap();
    let one = root.path().join("team1");
    let two = root.path().join("team2");
    for (team, dir) in [("1", &one), ("2", &two)] {
        let out = cli(&["batch", "--team", team, "--trials", "20", "--out", s(dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(dir.join("manifest.json").is_file());
        for i in 0..20 {
            assert!(dir.join(format!("trial_{i:03}")).join("trajectory.csv").is_file());
        }
    }

    let analysis = root.path().join("analysis");
    let out = cli(&["analyze", s(&one), s(&two), "--out", s(&analysis)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in ["metrics.json", "timing.csv", "ensemble.csv"] {
        assert!(analysis.join(file).is_file(), "{file}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(analysis.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["team1"]["n_trials"], 20);
    assert_eq!(metrics["team2"]["n_success"], 20);

    let same = root.path().join("same");
    let out = cli(&["analyze", s(&one), s(&one), "--out", s(&same)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(same.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["faster_team"], serde_json::json!(["EQUAL", "EQUAL", "EQUAL"]));
    assert_eq!(metrics["more_consistent_team"], serde_json::json!(["EQUAL", "EQUAL", "EQUAL"]));
}

#[test]
fn batch_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path| {
        cli(&["batch", "--team", "2", "--trials", "3", "--base-seed", "40", "--out", s(dir)])
    };
    assert_eq!(code(&args(a.path())), 0);
    assert_eq!(code(&args(b.path())), 0);
    for i in 0..3 {
        let f = format!("trial_{i:03}/trajectory.csv");
        assert_eq!(std::fs::read(a.path().join(&f)).unwrap(), std::fs::read(b.path().join(&f)).unwrap());
    }
}

#[test]
fn single_trial_batch_uses_run_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["batch", "--team", "2", "--trials", "1", "--base-seed", "5", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("trajectory.csv").is_file());
    assert!(!dir.path().join("trial_000").exists());
}

#[test]
fn analyze_empty_dir_exits_1() {
    let root = tempfile::tempdir().unwrap();
    let empty = root.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = cli(&["analyze", s(&empty), s(&empty), "--out", s(&root.path().join("o"))]);
    assert_eq!(code(&out), 1);
    assert!(!stderr(&out).is_empty());
}
