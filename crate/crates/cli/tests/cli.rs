//! End-to-end tests through the built binary and the sample market files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_itu-match"))
}

fn samples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("valid JSON on stdout")
}

#[test]
fn solve_single_pair_prints_known_fixed_point() {
    let input = samples().join("tu_1x1.json");
    let output = run(&["solve", input.to_str().unwrap()]);
    let doc = stdout_json(&output);
    let solution = &doc["solution"];
    let ln2 = std::f64::consts::LN_2;
    assert!((solution["u"][0].as_f64().unwrap() - ln2).abs() < 1e-9);
    assert!((solution["v"][0].as_f64().unwrap() - ln2).abs() < 1e-9);
    assert!((solution["mu"][0][0].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert_eq!(
        solution["report"]["converged"],
        serde_json::Value::Bool(true)
    );
}

#[test]
fn solve_is_byte_deterministic() {
    let input = samples().join("mixed_table_2x3.json");
    let first = run(&["solve", input.to_str().unwrap()]);
    let second = run(&["solve", input.to_str().unwrap()]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn solve_writes_output_file_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("solution.json");
    let input = samples().join("tu_1x1.json");
    let output = run(&[
        "solve",
        input.to_str().unwrap(),
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("\"schema_version\": 1"));
}

#[test]
fn forced_non_convergence_exits_2_with_partial_report() {
    let input = samples().join("mixed_table_2x3.json");
    let output = run(&["solve", input.to_str().unwrap(), "--max-iter", "1"]);
    assert_eq!(output.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(
        doc["solution"]["report"]["converged"],
        serde_json::Value::Bool(false)
    );
    assert_eq!(
        doc["solution"]["report"]["iterations"],
        serde_json::json!(1)
    );
}

#[test]
fn solve_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("solution.json");
    let input = samples().join("mixed_table_2x3.json");
    let solve = run(&[
        "solve",
        input.to_str().unwrap(),
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(solve.status.success());
    let validate = run(&[
        "validate",
        input.to_str().unwrap(),
        "--solution",
        out_path.to_str().unwrap(),
    ]);
    let doc = stdout_json(&validate);
    assert_eq!(doc["validation"]["passed"], serde_json::Value::Bool(true));
}

#[test]
fn validate_rejects_solution_for_a_different_market() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("solution.json");
    let solve = run(&[
        "solve",
        samples().join("tu_1x1.json").to_str().unwrap(),
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(solve.status.success());
    let validate = run(&[
        "validate",
        samples().join("mixed_table_2x3.json").to_str().unwrap(),
        "--solution",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(validate.status.code(), Some(1));
}

#[test]
fn csv_output_flattens_masses() {
    let input = samples().join("mixed_table_2x3.json");
    let output = run(&["solve", input.to_str().unwrap(), "--format", "csv"]);
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,mass"));
    // 2x3 pair rows plus 2 + 3 unmatched rows.
    assert_eq!(text.lines().count(), 1 + 6 + 5);
    assert!(text.contains("skilled,small,"));
    assert!(text.contains("skilled,,"));
}

#[test]
fn anneal_extracts_the_strong_diagonal() {
    let input = samples().join("individual_diag_2x2.json");
    let output = run(&["anneal", input.to_str().unwrap()]);
    let doc = stdout_json(&output);
    let outcome = &doc["outcome"];
    assert_eq!(outcome["integral"], serde_json::Value::Bool(true));
    assert_eq!(outcome["mu"][0][0].as_f64().unwrap(), 1.0);
    assert_eq!(outcome["mu"][1][1].as_f64().unwrap(), 1.0);
    assert_eq!(outcome["mu"][0][1].as_f64().unwrap(), 0.0);
    assert_eq!(
        outcome["verification"]["passed"],
        serde_json::Value::Bool(true)
    );
    let split = outcome["u"][0].as_f64().unwrap() + outcome["v"][0].as_f64().unwrap();
    assert!((split - 4.0).abs() < 1e-6);
}

#[test]
fn anneal_accepts_schedule_flags() {
    let input = samples().join("individual_diag_2x2.json");
    let output = run(&[
        "anneal",
        input.to_str().unwrap(),
        "--t-initial",
        "2.0",
        "--ratio",
        "0.4",
        "--steps",
        "20",
        "--format",
        "csv",
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = String::from_utf8(output.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("man,woman,mass"));
}

#[test]
fn oracle_compare_agrees_with_reference() {
    let input = samples().join("tu_1x1.json");
    let output = run(&[
        "oracle-compare",
        input.to_str().unwrap(),
        "--agents",
        "2000",
        "--seed",
        "7",
    ]);
    let doc = stdout_json(&output);
    let comparison = &doc["comparison"];
    assert!(comparison["max_abs_difference"].as_f64().unwrap() < 1e-8);
    assert_eq!(
        comparison["monte_carlo"]["agents_per_type"],
        serde_json::json!(2000)
    );
    // Analytic unmatched share is one half; 2000 agents put the empirical
    // fraction well within a loose band.
    let cells = comparison["monte_carlo"]["choice_fractions"]
        .as_array()
        .unwrap();
    let unmatched = cells
        .iter()
        .find(|c| c["y"] == serde_json::json!(""))
        .unwrap();
    assert!((unmatched["empirical"].as_f64().unwrap() - 0.5).abs() < 0.05);
}

#[test]
fn oracle_compare_rejects_non_tu_markets() {
    let input = samples().join("mixed_table_2x3.json");
    let output = run(&["oracle-compare", input.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("TU"), "{stderr}");
}

#[test]
fn balanced_market_honors_gauge_anchor() {
    let input = samples().join("balanced_tu_2x2.json");
    let output = run(&["solve", input.to_str().unwrap(), "--gauge-anchor", "x2"]);
    let doc = stdout_json(&output);
    assert_eq!(doc["solution"]["u"][1].as_f64().unwrap(), 0.0);
    // Unmatched masses are identically zero in the balanced variant.
    assert_eq!(doc["solution"]["mu_x0"][0].as_f64().unwrap(), 0.0);
}

#[test]
fn temperature_override_changes_the_solution() {
    let input = samples().join("tu_1x1.json");
    let base = stdout_json(&run(&["solve", input.to_str().unwrap()]));
    let hot = stdout_json(&run(&[
        "solve",
        input.to_str().unwrap(),
        "--temperature",
        "4.0",
    ]));
    assert_eq!(hot["solution"]["temperature"].as_f64().unwrap(), 4.0);
    assert_ne!(
        base["solution"]["mu"][0][0].as_f64().unwrap(),
        hot["solution"]["mu"][0][0].as_f64().unwrap()
    );
}

#[test]
fn diagnose_flag_embeds_the_jacobian_record() {
    let input = samples().join("tu_1x1.json");
    let doc = stdout_json(&run(&["solve", input.to_str().unwrap(), "--diagnose"]));
    let diag = &doc["solution"]["jacobian_diagnostic"];
    assert_eq!(diag["dominant_diagonal"], serde_json::Value::Bool(true));
    assert!(diag["min_margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_documents_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");

    std::fs::write(&bad, "{ not json").unwrap();
    let output = run(&["solve", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line"));

    let unknown_family = r#"{
        "schema_version": 1,
        "market": {
            "x_types": ["a"], "y_types": ["b"], "n": [1.0], "m": [1.0],
            "temperature": 1.0,
            "transfers": {"family": "QTU", "params": {"phi": 0.0}}
        }
    }"#;
    std::fs::write(&bad, unknown_family).unwrap();
    let output = run(&["solve", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("QTU"));

    let unbalanced = r#"{
        "schema_version": 1,
        "market": {
            "x_types": ["a"], "y_types": ["b"], "n": [2.0], "m": [1.0],
            "temperature": 1.0, "balanced": true,
            "transfers": {"family": "TU", "params": {"phi": 0.0}}
        }
    }"#;
    std::fs::write(&bad, unbalanced).unwrap();
    let output = run(&["solve", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("sum(n) = 2"), "{stderr}");
}

#[test]
fn thread_cap_env_var_is_accepted() {
    let input = samples().join("tu_1x1.json");
    let output = binary()
        .args(["solve", input.to_str().unwrap()])
        .env("ITU_MATCH_THREADS", "2")
        .output()
        .unwrap();
    assert!(output.status.success());
    let garbled = binary()
        .args(["solve", input.to_str().unwrap()])
        .env("ITU_MATCH_THREADS", "lots")
        .output()
        .unwrap();
    // Invalid values warn but do not fail the run.
    assert!(garbled.status.success());
    assert!(String::from_utf8_lossy(&garbled.stderr).contains("warning"));
}
