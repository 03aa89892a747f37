//! The `armsim` binary end to end, and the shipped scenario files.

use std::process::Command;

use armsim::sim::{TrajectoryLog, TRAJECTORY_HEADER};
use armsim::Scenario;

const SCENARIOS: [&str; 5] = ["default", "dynamic", "flyby", "height_adaptation", "paper_comparison"];

fn scenario_path(name: &str) -> String {
    format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn shipped_scenarios_load_and_round_trip() {
    for name in SCENARIOS {
        let sc = Scenario::load(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(sc.name, name);
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back, sc, "{name} does not round-trip");
    }
}

#[test]
fn run_writes_log_obstacles_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(["run", "--scenario", &scenario_path("flyby"), "--controller", "baseline", "--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let log = TrajectoryLog::load(&out.join("trajectory.csv")).unwrap();
    assert!(!log.is_empty());
    let text = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER.join(","));
    assert!(out.join("obstacles.csv").exists());
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["completed"], true);
}

#[test]
fn bad_scenario_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"schema": 1, "dt": 0.1, "bogus": 3}"#).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(["run", "--scenario"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn verify_invariant_and_emit_plots() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    let st = Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(["verify-invariant", "--scenario", &scenario_path("default"), "--grid", "2", "--out"])
        .arg(&grid)
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(std::fs::read_to_string(&grid).unwrap().lines().count(), 1 + 16);

    let run_dir = dir.path().join("run");
    let st = Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(["run", "--scenario", &scenario_path("flyby"), "--out"])
        .arg(&run_dir)
        .status()
        .unwrap();
    assert!(st.success());
    let plots = dir.path().join("plots");
    let st = Command::new(env!("CARGO_BIN_EXE_armsim"))
        .args(["emit-plots", "--log"])
        .arg(run_dir.join("trajectory.csv"))
        .arg("--out")
        .arg(&plots)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(std::fs::read_dir(&plots).unwrap().count() > 0);
}
