//! End-to-end tests of the command-line interface: exit codes, output
//! schemas, and byte stability.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_openmap"))
}

fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn analyze_prints_matrix_and_exits_zero() {
    let out = run(&["analyze", model_path("tent.json").to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("accepted: yes"));
    assert!(text.contains("affine (exact)"));
    assert!(text.contains("0.50"));
    assert!(text.contains("digraph Gamma_H"));
    assert!(text.contains("v1 [shape=circle,style=open];"));
}

#[test]
fn analyze_cubic_shows_bound_matrices() {
    let out = run(&["analyze", model_path("cubic.json").to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("lower transition matrix"));
    assert!(text.contains("upper transition matrix"));
    assert!(text.contains("4.00"));
    assert!(text.contains("0.18"));
}

#[test]
fn malformed_model_exits_two_and_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"cut_points\": [0.0, 1.0]}").unwrap();
    let out = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("branches"), "stderr: {err}");
}

#[test]
fn rejected_model_exits_two_with_cause() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("badimage.json");
    std::fs::write(
        &path,
        r#"{
  "cut_points": [0.0, 0.25, 0.5, 0.75, 1.0],
  "branches": [
    { "kind": "affine", "slope": 2.0, "intercept": 0.0 },
    { "kind": "affine", "slope": 2.0, "intercept": 0.0 },
    { "kind": "affine", "slope": -2.0, "intercept": 2.0 },
    { "kind": "affine", "slope": -2.0, "intercept": 2.0 }
  ],
  "hole": [1],
  "images": [[0.0, 0.5], [0.5, 0.75], [0.5, 1.0], [0.0, 0.5]]
}"#,
    )
    .unwrap();
    let out = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cell 2"), "stderr: {err}");
    assert!(err.contains("image mismatch"), "stderr: {err}");
}

#[test]
fn bounds_csv_is_byte_stable() {
    let model = model_path("cubic.json");
    let args = ["bounds", model.to_str().unwrap(), "--n", "12", "--set", "v1,v3,v4"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = stdout(&first);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,X_lower,X_upper,Y_lower,Y_upper,P_lower,P_upper,exact,X_lower_S,X_upper_S,Y_lower_S,Y_upper_S"
    );
    assert_eq!(text.lines().count(), 14);
}

#[test]
fn bounds_tent_reproduces_exact_series() {
    let model = model_path("tent.json");
    let out = run(&["bounds", model.to_str().unwrap(), "--n", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "0,0.25,0.25,0.25,0.25,0.75,0.75,true");
    assert_eq!(lines[2], "1,0.125,0.125,0.375,0.375,0.625,0.625,true");
    assert_eq!(lines[3], "2,0.125,0.125,0.5,0.5,0.5,0.5,true");
}

#[test]
fn bounds_no_clamp_keeps_divergent_upper_values() {
    let model = model_path("cubic.json");
    let clamped = stdout(&run(&["bounds", model.to_str().unwrap(), "--n", "12"]));
    let raw = stdout(&run(&[
        "bounds",
        model.to_str().unwrap(),
        "--n",
        "12",
        "--no-clamp",
    ]));
    let last_raw: f64 = raw
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    let last_clamped: f64 = clamped
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(last_raw > 1.0);
    assert!(last_clamped <= 1.0);
}

#[test]
fn bounds_all_emits_blocks_and_report() {
    let model = model_path("cubic.json");
    let out = run(&["bounds", model.to_str().unwrap(), "--n", "6", "--all"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("# S = {v1,v2,v3}"));
    assert!(text.contains("# S = {v1,v3,v4}"));
    assert!(text.contains("# S = {v1,v2,v3,v4}"));
    assert!(text.contains("# tightening over n <= 6"));
    assert!(text.contains("<- best"));
}

#[test]
fn bad_selector_exits_three() {
    let model = model_path("cubic.json");
    // {v3} has a self-loop, so its complement is cyclic
    let out = run(&["bounds", model.to_str().unwrap(), "--set", "v1,v2,v4"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not structural"), "stderr: {err}");
    // missing hole vertex
    let out = run(&["bounds", model.to_str().unwrap(), "--set", "v3,v4"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn auto_selector_picks_canonical_set() {
    let model = model_path("cubic.json");
    let auto = stdout(&run(&["bounds", model.to_str().unwrap(), "--n", "4", "--auto"]));
    let explicit = stdout(&run(&[
        "bounds",
        model.to_str().unwrap(),
        "--n",
        "4",
        "--set",
        "v1,v2,v3",
    ]));
    assert_eq!(auto, explicit);
}

#[test]
fn exact_command_matches_bounds_for_tent() {
    let model = model_path("tent.json");
    let exact = stdout(&run(&["exact", model.to_str().unwrap(), "--n", "6"]));
    let bounds = stdout(&run(&["bounds", model.to_str().unwrap(), "--n", "6"]));
    for (a, b) in exact.lines().zip(bounds.lines()).skip(1) {
        let ax: f64 = a.split(',').nth(1).unwrap().parse().unwrap();
        let bx: f64 = b.split(',').nth(1).unwrap().parse().unwrap();
        assert!((ax - bx).abs() < 1e-10);
    }
}

#[test]
fn structural_sets_lists_canonical_order() {
    let model = model_path("tent.json");
    let out = stdout(&run(&["structural-sets", model.to_str().unwrap()]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("{v1,v2,v3}"));
    assert!(lines[1].starts_with("{v1,v3,v4}"));
    assert!(lines[2].starts_with("{v1,v2,v3,v4}"));
    assert!(lines[0].contains("complement={v4}"));
}

#[test]
fn simulate_is_seed_deterministic() {
    let model = model_path("tent.json");
    let args = [
        "simulate",
        model.to_str().unwrap(),
        "--n",
        "5",
        "--samples",
        "20000",
        "--seed",
        "11",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text
        .lines()
        .next()
        .unwrap()
        .ends_with("exact,X_stderr,Y_stderr"));
    // X^1 estimate near 1/8
    let x1: f64 = text
        .lines()
        .nth(2)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((x1 - 0.125).abs() < 0.02);
}

#[test]
fn verify_passes_on_bundled_models() {
    for name in ["tent.json", "cubic.json", "shift.json"] {
        let model = model_path(name);
        let out = run(&[
            "verify",
            model.to_str().unwrap(),
            "--n",
            "20",
            "--samples",
            "2000",
        ]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(stdout(&out).contains("verification passed"));
    }
}

#[test]
fn verify_detects_injected_fault() {
    let model = model_path("tent.json");
    let out = run(&[
        "verify",
        model.to_str().unwrap(),
        "--n",
        "10",
        "--samples",
        "0",
        "--inject-fault",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("verification FAILED"), "stderr: {err}");
}

#[test]
fn output_file_flag_writes_identical_bytes() {
    let model = model_path("cubic.json");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let piped = run(&["bounds", model.to_str().unwrap(), "--n", "8"]);
    let filed = run(&[
        "bounds",
        model.to_str().unwrap(),
        "--n",
        "8",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(filed.status.success());
    assert_eq!(std::fs::read(&path).unwrap(), piped.stdout);
}
