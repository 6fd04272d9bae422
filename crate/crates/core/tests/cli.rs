use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn cpquant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpquant"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("JSON error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn evolve_reports_the_orbit() {
    let out = cpquant(&[
        "evolve",
        "--channel",
        r#"{"catalog":"amplitude_damping","gamma":0.5}"#,
        "--state",
        r#"{"basis":[2,1]}"#,
        "--steps",
        "3",
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["kind"], "evolve");
    assert!(report["inputs"]["channel"]
        .as_str()
        .unwrap()
        .starts_with("sha256:"));
    assert_eq!(report["result"]["steps"], 3);
    assert_eq!(
        report["result"]["trace_distance_to_previous"]
            .as_array()
            .unwrap()
            .len(),
        3
    );
}

#[test]
fn csv_flag_prints_the_trace() {
    let out = cpquant(&["--csv", "run", &scenario("damping-evolve.json")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("step,trace_distance_to_previous,trace_distance_to_cycle")
    );
    assert_eq!(lines.count(), 50);
}

#[test]
fn csv_flag_is_rejected_without_a_trace() {
    let out = cpquant(&["--csv", "run", &scenario("markov-pushforward.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = cpquant(&[
        "--out",
        path.to_str().unwrap(),
        "run",
        &scenario("quantize-bitflip.json"),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["kind"], "quantize");
}

#[test]
fn seed_flag_is_recorded() {
    let out = cpquant(&["--seed", "42", "run", &scenario("cnot-fixpoint.json")]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["seed"], 42);
}

#[test]
fn malformed_json_exits_with_a_parse_error() {
    let out = cpquant(&[
        "evolve",
        "--channel",
        "{not json",
        "--state",
        r#"{"random":2}"#,
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "parse");
    assert_eq!(err["error"]["field"], "--channel");
}

#[test]
fn missing_input_is_a_validation_error() {
    let out = cpquant(&["evolve", "--channel", r#"{"catalog":"cnot"}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");
}

#[test]
fn unknown_flag_exits_with_code_one() {
    let out = cpquant(&["evolve", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "parse");
}

#[test]
fn inconsistent_phases_exit_with_code_two() {
    let out = cpquant(&["run", &scenario("verify-phaseflip.json")]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "numerical");
    assert!(err["error"]["detail"].is_object());
}

#[test]
fn missing_file_exits_with_code_three() {
    let out = cpquant(&["run", "no/such/scenario.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");
}

#[test]
fn help_exits_cleanly() {
    let out = cpquant(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("quantize"));
}
