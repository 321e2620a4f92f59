//! Spawns the compiled binary and checks the documented command-line
//! contract: exit codes, determinism across runs and thread counts, and the
//! shape of the emitted reports.

use std::path::Path;
use std::process::{Command, Output};

fn ccq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_str(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_str(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).expect("utf-8 stderr")
}

#[test]
fn construct_terwilliger_reports_q_polynomial() {
    let o = ccq(&["construct", "terwilliger", "--n", "4", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr_str(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout_str(&o)).expect("valid JSON");
    assert_eq!(v["schema"], "ccq/1");
    assert_eq!(v["q_polynomial"]["verdict"], true);
    assert_eq!(v["q_polynomial"]["conditions_agree"], true);
    assert_eq!(v["identities"]["pass"], true);
    assert_eq!(v["structure"]["fibers"], serde_json::json!([1, 4, 6, 4, 1]));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let base = ccq(&["construct", "mub", "--format", "json"]);
    assert_eq!(base.status.code(), Some(0));
    for extra in [
        vec!["construct", "mub", "--format", "json"],
        vec!["construct", "mub", "--format", "json", "--threads", "1"],
        vec!["construct", "mub", "--format", "json", "--threads", "5"],
    ] {
        let o = ccq(&extra);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(o.stdout, base.stdout, "report bytes differ for {extra:?}");
    }
}

#[test]
fn malformed_partition_file_is_an_input_error_with_line_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.part");
    std::fs::write(&path, "points 2 relations 2\n0 x\n1 0\n").unwrap();
    let o = ccq(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr_str(&o);
    assert!(err.starts_with("error:"), "stderr: {err}");
    assert!(err.contains("line 2"), "diagnostic should cite line 2: {err}");
}

#[test]
fn axiom_violation_is_an_input_error_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nondiag.part");
    std::fs::write(&path, "points 2 relations 2\n0 1\n1 1\n").unwrap();
    let o = ccq(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr_str(&o);
    assert!(err.contains("axiom"), "stderr: {err}");
}

#[test]
fn non_q_polynomial_verdict_exits_two() {
    let emitted = ccq(&["catalog", "emit", "rectangular:3,3"]);
    assert_eq!(emitted.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rect.part");
    std::fs::write(&path, emitted.stdout).unwrap();
    let o = ccq(&["analyze", path.to_str().unwrap(), "--search-ordering"]);
    assert_eq!(o.status.code(), Some(2), "stderr: {}", stderr_str(&o));
    assert!(stdout_str(&o).contains("q-polynomial: FALSE"));
}

#[test]
fn shell_restriction_command_succeeds() {
    let o = ccq(&[
        "construct",
        "restrict",
        "--n",
        "7",
        "--shells",
        "3,4",
        "--code",
        "fano_plane",
        "--code",
        "fano_complement",
    ]);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr_str(&o));
    let text = stdout_str(&o);
    assert!(text.contains("certificate: PASS"), "report: {text}");
}

#[test]
fn unknown_flag_is_an_input_error() {
    let o = ccq(&["analyze", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr_str(&o).is_empty());
}

#[test]
fn out_flag_writes_the_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = ccq(&[
        "construct",
        "terwilliger",
        "--n",
        "3",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout_str(&o).is_empty());
    assert!(Path::new(&path).is_file());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["q_polynomial"]["verdict"], true);
}

#[test]
fn version_flag_prints_and_exits_zero() {
    let o = ccq(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout_str(&o).contains("ccq"));
}
