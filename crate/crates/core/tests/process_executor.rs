//! ProcessExecutor against a fake runner script that speaks the verdict
//! protocol. The script picks its behaviour from the candidate code.

#![cfg(unix)]

use std::path::PathBuf;
use std::time::Instant;

use curate::sft::{
    rejection_sample_code, CandidateSet, ProcessExecutor, SandboxError, SandboxExecutor, SandboxLimits,
    VerdictStatus, VerdictWireError,
};

const RUNNER: &str = r#"#!/bin/sh
code="$1"; tests="$2"; limit="$4"
[ "$3" = "--time-limit-ms" ] || { echo "bad args" >&2; exit 9; }
[ -f "$tests" ] || { echo "no tests file" >&2; exit 9; }
verdict() { printf '{"status":"%s","tests_run":%s,"tests_passed":%s,"duration_ms":%s,"stderr_tail":""}\n' "$1" "$2" "$3" "$4"; }
case "$(cat "$code")" in
  PASS*) verdict pass 3 3 5 ;;
  FAIL*) verdict fail 3 1 5 ;;
  ERROR*) verdict error 0 0 1 ;;
  TIMEOUT*) verdict timeout 0 0 "$limit" ;;
  SPAM*) echo "candidate printed this"; verdict pass 1 1 1 ;;
  LIAR*) verdict timeout 0 0 1 ;;
  HANG*) sleep 30 ;;
  CRASH*) echo "runner exploded" >&2; exit 1 ;;
esac
"#;

fn runner() -> (tempfile::TempDir, ProcessExecutor) {
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("runner.sh");
    std::fs::write(&path, RUNNER).unwrap();
    let mut exec = ProcessExecutor::new(["sh".to_string(), path.display().to_string()]);
    exec.grace_ms = 300;
    (dir, exec)
}

fn limits(ms: u64) -> SandboxLimits {
    SandboxLimits {
        time_limit_ms: ms,
        memory_limit_mb: None,
    }
}

#[test]
fn statuses_round_trip() {
    let (_d, exec) = runner();
    let l = limits(1000);
    assert_eq!(exec.run("PASS", "t", &l).unwrap().status, VerdictStatus::Pass);
    let fail = exec.run("FAIL", "t", &l).unwrap();
    assert_eq!((fail.status, fail.tests_passed), (VerdictStatus::Fail, 1));
    assert_eq!(exec.run("ERROR", "t", &l).unwrap().status, VerdictStatus::Error);
    let t = exec.run("TIMEOUT", "t", &l).unwrap();
    assert_eq!((t.status, t.duration_ms), (VerdictStatus::Timeout, 1000));
}

#[test]
fn stray_stdout_is_a_protocol_error() {
    let (_d, exec) = runner();
    assert!(matches!(
        exec.run("SPAM", "t", &limits(1000)),
        Err(SandboxError::Wire(VerdictWireError::ExtraOutput(2)))
    ));
}

#[test]
fn timeout_shorter_than_limit_is_inconsistent() {
    let (_d, exec) = runner();
    assert!(matches!(
        exec.run("LIAR", "t", &limits(1000)),
        Err(SandboxError::Wire(VerdictWireError::Inconsistent(_)))
    ));
}

#[test]
fn hung_runner_killed_by_watchdog() {
    let (_d, exec) = runner();
    let start = Instant::now();
    let v = exec.run("HANG", "t", &limits(500)).unwrap();
    assert_eq!(v.status, VerdictStatus::Timeout);
    assert!(v.duration_ms >= 500);
    assert!(start.elapsed().as_millis() < 2000, "{:?}", start.elapsed());
}

#[test]
fn crashing_runner_is_harness_error() {
    let (_d, exec) = runner();
    match exec.run("CRASH", "t", &limits(1000)) {
        Err(SandboxError::Harness { stderr, .. }) => assert!(stderr.contains("runner exploded")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_program_is_spawn_error() {
    let exec = ProcessExecutor::new(["/nonexistent/runner"]);
    assert!(matches!(exec.run("PASS", "t", &limits(100)), Err(SandboxError::Spawn { .. })));
}

#[test]
fn rejection_keeps_only_passing_candidates() {
    let (_d, exec) = runner();
    let set: CandidateSet = serde_json::from_value(serde_json::json!({
        "instruction_id": "p1",
        "candidates": [{"text": "FAIL a"}, {"text": "PASS b"}, {"text": "TIMEOUT c"}, {"text": "PASS d"}]
    }))
    .unwrap();
    let r = rejection_sample_code(&set, "assert f() == 1", &exec, &limits(1000)).unwrap();
    assert_eq!(r.kept_indices, [1, 3]);
    let statuses: Vec<_> = r.verdicts.iter().map(|v| v.status).collect();
    assert_eq!(
        statuses,
        [VerdictStatus::Fail, VerdictStatus::Pass, VerdictStatus::Timeout, VerdictStatus::Pass]
    );
}
