//! End-to-end runs of the binary: the exit-code contract (0 checks
//! hold, 1 verified violation with a stderr bundle, 2 usage errors),
//! trace shapes, and round trips of emitted objects.

use std::path::PathBuf;
use std::process::{Command, Output};

use cantorlab_core::{MLTestFamily, MadisonTest};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cantorlab"))
        .args(args)
        .output()
        .expect("the binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("utf-8 stderr")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cantorlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir.join(name)
}

#[test]
fn dubins_reports_the_band_ratio_bound_as_csv() {
    let out = run(&["dubins", "--depth", "6", "--c", "2", "--d", "5", "--k", "2", "--format",
        "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    let header = lines.next().expect("header line");
    assert!(header.contains("measured"));
    assert!(header.contains("bound_approx12"));
    let row = lines.next().expect("report row");
    assert!(row.contains(",4/25,"), "bound column carries (2/5)^2 exactly: {row}");
    assert!(row.contains("0.160000000000"), "decimal rendering sits next to it: {row}");
    assert!(row.contains("true"));
}

#[test]
fn density_trace_of_a_frozen_cylinder_is_constant_one_past_the_root() {
    let out = run(&["trace-density", "--cylinder", "1", "--path", "111", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,local_measure,local_measure_approx12");
    assert_eq!(lines[1], "0,1/2,0.500000000000");
    assert_eq!(lines[2], "1,1,1.000000000000");
    assert_eq!(lines[3], "2,1,1.000000000000");
    assert_eq!(lines[4], "3,1,1.000000000000");
    assert_eq!(lines.len(), 5);
}

#[test]
fn oscillation_trace_of_a_staged_martingale_has_positive_gap() {
    let out = run(&["dubins", "--kind", "omega-interval", "--depth", "8", "--stages", "6",
        "--seed", "3", "--c", "1", "--d", "3", "--trace", "10110100"]);
    assert_eq!(code(&out), 0);
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("JSON trace");
    let gap = value["gap"]["exact"].as_str().expect("exact gap");
    assert_ne!(gap, "0", "the trace oscillates");
    assert!(!gap.starts_with('-'));
    assert!(value["rows"].as_array().expect("rows").len() == 9);
}

#[test]
fn built_family_verifies_and_its_file_round_trips() {
    let path = temp_path("oscillating.json");
    let out = run(&["madison", "build-oscillating", "--depth", "8", "--swings", "2", "--seed",
        "1", "--c", "2", "--d", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let text = std::fs::read_to_string(&path).expect("artifact written");
    let test: MadisonTest = serde_json::from_str(&text).expect("re-parses");
    let again: MadisonTest =
        serde_json::from_str(&serde_json::to_string(&test).unwrap()).unwrap();
    assert_eq!(test, again);

    let out = run(&["madison", "verify", "--test", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("JSON report");
    assert_eq!(report["holds"], serde_json::Value::Bool(true));
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn converted_level_sets_reparse_to_an_equal_object() {
    let test_path = temp_path("for-conversion.json");
    let out = run(&["madison", "build-oscillating", "--depth", "8", "--swings", "2", "--seed",
        "4", "--c", "2", "--d", "5", "--out", test_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let ml_path = temp_path("levels.json");
    let out = run(&["madison", "to-ml", "--test", test_path.to_str().unwrap(), "--k-max", "3",
        "--out", ml_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let text = std::fs::read_to_string(&ml_path).expect("artifact written");
    let family: MLTestFamily = serde_json::from_str(&text).expect("re-parses");
    assert_eq!(family.levels.len(), 4);
    let again: MLTestFamily =
        serde_json::from_str(&serde_json::to_string(&family).unwrap()).unwrap();
    assert_eq!(family, again);
}

#[test]
fn violated_conditions_exit_one_with_a_stderr_bundle() {
    let path = temp_path("broken.json");
    std::fs::write(
        &path,
        r#"{"stages": [[""], [""]], "labels": [[], []], "bound": "5/3"}"#,
    )
    .unwrap();
    let out = run(&["madison", "verify", "--test", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("JSON report");
    assert_eq!(report["holds"], serde_json::Value::Bool(false));
    let bundle: serde_json::Value = serde_json::from_str(&stderr(&out)).expect("JSON bundle");
    assert!(bundle["violation"].as_str().unwrap().contains("violation"));
    assert!(bundle["inputs"]["test"].is_object());
}

#[test]
fn malformed_and_missing_inputs_are_usage_errors() {
    let path = temp_path("not-json.json");
    std::fs::write(&path, "{not json").unwrap();
    let out = run(&["dubins", "--scenario", path.to_str().unwrap(), "--c", "2", "--d", "5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("malformed"));

    let out = run(&["dubins", "--scenario", "/definitely/missing.json", "--c", "2", "--d",
        "5"]);
    assert_eq!(code(&out), 2);

    let versioned = temp_path("future-version.json");
    std::fs::write(
        &versioned,
        r#"{"version": 7, "name": "x", "kind": "oscillator",
            "parameters": {"depth": 6, "swings": 1}, "seed": 0}"#,
    )
    .unwrap();
    let out = run(&["dubins", "--scenario", versioned.to_str().unwrap(), "--c", "2", "--d",
        "5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("version"));
}

#[test]
fn budget_overruns_are_refused_with_a_clear_message() {
    let out = run(&["--depth-limit", "30", "dubins", "--depth", "6", "--c", "2", "--d", "5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("budget"));

    let out = run(&["--depth-limit", "20", "--stage-limit", "64", "dubins", "--depth", "6",
        "--c", "2", "--d", "5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("budget"));

    let out = run(&["trace-density", "--kind", "porous-class", "--depth", "40", "--path",
        "111"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn object_requests_in_csv_format_are_refused() {
    let out = run(&["madison", "build-oscillating", "--depth", "8", "--c", "2", "--d", "5",
        "--format", "csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--format json"));
}

#[test]
fn no_promised_hole_yields_a_header_only_file() {
    let out = run(&["derivative", "holes", "--depth", "4", "--stages", "2", "--seed", "5",
        "--p", "10", "--k", "2", "--lo", "1/4", "--hi", "3/8", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1, "header only: {text}");
}

#[test]
fn unwritable_output_paths_are_usage_errors() {
    let out = run(&["dubins", "--depth", "6", "--c", "2", "--d", "5", "--out",
        "/definitely/missing/dir/report.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot write"));
}

#[test]
fn sweeps_hold_across_every_kind() {
    for (kind, extra) in [
        ("oscillator", vec!["--depth", "10", "--swings", "2"]),
        ("porous-class", vec!["--depth", "8"]),
        ("mass-cdf", vec!["--depth", "5", "--stages", "3"]),
    ] {
        let mut args = vec!["sweep", "--kind", kind, "--seeds", "4"];
        args.extend(extra);
        let out = run(&args);
        assert_eq!(code(&out), 0, "{kind}: {}", stderr(&out));
        let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(value["report"]["all_hold"], serde_json::Value::Bool(true));
        assert_eq!(value["report"]["kind"].as_str().unwrap(), kind);
    }
}

#[test]
fn scenario_files_and_inline_parameters_agree() {
    let path = temp_path("oscillator-scenario.json");
    std::fs::write(
        &path,
        r#"{"version": 1, "name": "agree", "kind": "oscillator",
            "parameters": {"depth": 6, "swings": 1}, "seed": 0}"#,
    )
    .unwrap();
    let from_file = run(&["dubins", "--scenario", path.to_str().unwrap(), "--c", "2", "--d",
        "5", "--k", "2", "--format", "csv"]);
    let inline = run(&["dubins", "--depth", "6", "--c", "2", "--d", "5", "--k", "2",
        "--format", "csv"]);
    assert_eq!(code(&from_file), 0);
    assert_eq!(stdout(&from_file), stdout(&inline));
}
