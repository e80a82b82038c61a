//! Drives the built `dtsim` binary end to end: artifact layout, report
//! reconstruction from a stored log, validation output, sweep directories,
//! and the pass/fail/operational-error exit-code contract.

use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dtsim");
const SCENARIO_A: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/scenario_a.toml");

fn dtsim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn run_writes_artifacts_and_report_rebuilds_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = dtsim(&["run", "--scenario", SCENARIO_A, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    for artifact in [
        "events.log",
        "summary.txt",
        "latency_records.csv",
        "link_stats.csv",
        "digest.txt",
        "final_route.waypoints",
    ] {
        assert!(out_dir.join(artifact).is_file(), "missing {artifact}");
    }

    let run_stdout = stdout(&out);
    assert!(run_stdout.contains("T_max 96.61 ms"));
    assert!(run_stdout.contains("threshold: 2.9 m"));

    // The stored summary matches what the run printed, and `report` derives
    // the identical text back from the log alone.
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(run_stdout.starts_with(&summary));
    let rep = dtsim(&["report", "--in", out_dir.to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(0));
    assert_eq!(stdout(&rep), summary);

    // The digest artifact carries the full fingerprint of the event log.
    let digest = std::fs::read_to_string(out_dir.join("digest.txt")).unwrap();
    assert_eq!(digest.trim().len(), 64);
    assert!(summary.contains(&digest[..12]));
}

#[test]
fn seed_override_changes_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let other = dir.path().join("other");
    let first =
        dtsim(&["run", "--scenario", SCENARIO_A, "--out", base.to_str().unwrap()]);
    let second = dtsim(&[
        "run",
        "--scenario",
        SCENARIO_A,
        "--seed",
        "9",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(second.status.code(), Some(0));
    let d1 = std::fs::read_to_string(base.join("digest.txt")).unwrap();
    let d2 = std::fs::read_to_string(other.join("digest.txt")).unwrap();
    assert_ne!(d1, d2);
}

#[test]
fn validate_accepts_shipped_scenarios_and_lists_problems_in_broken_ones() {
    let ok = dtsim(&["validate", "--scenario", SCENARIO_A]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("ok (6 nodes, 12 segments, 3 rsus"));

    let dir = tempfile::tempdir().unwrap();
    let broken_path = dir.path().join("broken.toml");
    std::fs::write(
        &broken_path,
        "[run]\nduration_s = -1.0\n\n[ego]\norigin = 0\ndestination = 99\n",
    )
    .unwrap();
    let bad = dtsim(&["validate", "--scenario", broken_path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("run.duration_s"));
    assert!(stderr.contains("needs at least one node"));

    let missing = dtsim(&["validate", "--scenario", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn failing_verdicts_exit_nonzero() {
    // The reference network with the cloud uplink dead: the run finishes but
    // the reliability verdict fails, so the exit code must be 1.
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("dead_uplink.toml");
    let text = std::fs::read_to_string(SCENARIO_A).unwrap();
    // The override goes in front: appended after the [[rsus]] entries it
    // would be parsed as a key of the last rsu.
    std::fs::write(&scenario_path, format!("[links.v2c]\ncoverage_m = 0.0\n\n{text}")).unwrap();

    let out_dir = dir.path().join("run");
    let out = dtsim(&[
        "run",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout(&out);
    assert!(summary.contains("delivery ratio >= 95%: FAIL"));
    assert!(summary.contains("overall: FAIL"));
}

#[test]
fn sweep_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dtsim(&[
        "sweep",
        "--scenario",
        SCENARIO_A,
        "--seeds",
        "1..2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("seed 1:"));
    assert!(text.contains("seed 2:"));
    assert_eq!(text.matches("PASS").count(), 2);
    for seed in 1..=2 {
        assert!(dir.path().join(format!("seed-{seed}")).join("events.log").is_file());
    }
}

#[test]
fn operational_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("unused");
    let missing = dir.path().join("nonexistent.toml");
    let out = dtsim(&[
        "run",
        "--scenario",
        missing.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    assert!(!out_dir.exists(), "no artifacts on failure");
}
