use std::path::Path;
use std::process::Command;

use derham_cli::runner::{run, RunOptions};
use derham_cli::scene::{load_scene, resolve_scene, SceneFile};
use derham_core::Error;

fn scene_from(text: &str) -> Result<derham_cli::scene::Scene, Error> {
    let file: SceneFile = serde_json::from_str(text).unwrap();
    resolve_scene(&file)
}

const SQUARE_SCENE: &str = r#"{
  "schema": 1,
  "dim": 2,
  "currents": {
    "square": { "type": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0] }
  },
  "forms": {
    "vol": { "degree": 2, "terms": [ { "axes": [1, 2], "coeff": "1" } ] }
  },
  "experiments": {
    "area": { "kind": "evaluate", "current": "square", "form": "vol" }
  }
}"#;

#[test]
fn minimal_scene_loads() {
    let scene = scene_from(
        r#"{
          "schema": 1,
          "dim": 1,
          "currents": { "seg": { "type": "segment", "start": [0.0], "end": [1.0] } },
          "forms": { "g": { "degree": 1, "terms": [ { "axes": [1], "coeff": "x1" } ] } }
        }"#,
    )
    .unwrap();
    assert_eq!(scene.dim, 1);
    assert!(scene.currents.contains_key("seg"));
    assert!(scene.forms.contains_key("g"));
}

#[test]
fn unresolved_reference_is_reported_by_name() {
    let err = scene_from(
        r#"{
          "schema": 1,
          "dim": 2,
          "currents": {
            "a": { "type": "segment", "start": [0.0, 0.0], "end": [1.0, 0.0] },
            "s": { "type": "sum", "terms": [ { "coeff": 1.0, "current": "T9" } ] }
          }
        }"#,
    );
    let err = match err {
        Ok(_) => panic!("expected scene diagnostics"),
        Err(e) => e,
    };
    match err {
        Error::Scene(violations) => {
            assert!(violations.iter().any(|v| v.contains("T9")), "{violations:?}");
        }
        other => panic!("expected scene diagnostics, got {other}"),
    }
}

#[test]
fn every_violation_is_collected() {
    // wrong endpoint dimension, an unknown kernel, and an experiment
    // naming a missing operand must all be listed together
    let err = scene_from(
        r#"{
          "schema": 1,
          "dim": 2,
          "currents": { "bad": { "type": "segment", "start": [0.0, 0.0, 0.0], "end": [1.0, 0.0, 0.0] } },
          "kernels": { "k": "gaussian" },
          "experiments": { "e": { "kind": "evaluate", "current": "missing", "form": "absent" } }
        }"#,
    );
    let err = match err {
        Ok(_) => panic!("expected scene diagnostics"),
        Err(e) => e,
    };
    match err {
        Error::Scene(violations) => {
            assert!(violations.len() >= 3, "{violations:?}");
            assert!(violations.iter().any(|v| v.contains("dimension mismatch")));
            assert!(violations.iter().any(|v| v.contains("gaussian")));
            assert!(violations.iter().any(|v| v.contains("missing")));
        }
        other => panic!("expected scene diagnostics, got {other}"),
    }
}

#[test]
fn evaluate_experiment_writes_reports() {
    let scene = scene_from(SQUARE_SCENE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let spec = scene.experiments["area"].clone();
    let outcome = run(&scene, "area", &spec, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(outcome.exit_code, 0);

    let csv = std::fs::read_to_string(&outcome.csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("experiment,value"));
    let row = lines.next().unwrap();
    let value: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - 1.0).abs() < 1e-6, "{row}");

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&outcome.json_path).unwrap()).unwrap();
    assert_eq!(json["kind"], "evaluate");
}

#[test]
fn scene_file_round_trip_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    std::fs::write(&path, SQUARE_SCENE).unwrap();
    let scene = load_scene(&path).unwrap();
    assert!(scene.experiments.contains_key("area"));
}

fn derham() -> Command {
    Command::new(env!("CARGO_BIN_EXE_derham"))
}

fn read_csv(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(format!("{name}.csv"))).unwrap()
}

fn read_json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap())
        .unwrap()
}

#[test]
fn binary_reproduces_the_transverse_index() {
    let dir = tempfile::tempdir().unwrap();
    let status = derham()
        .args(["run", "--experiment", "reproduce-kronecker", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let json = read_json(dir.path(), "reproduce-kronecker");
    assert_eq!(json["result"]["verdict"], "CONVERGED");
    let limit = json["result"]["limit"].as_f64().unwrap();
    assert!((limit.abs() - 1.0).abs() < 0.01, "{limit}");
    let csv = read_csv(dir.path(), "reproduce-kronecker");
    assert_eq!(csv.lines().count(), 9); // header + 8 levels
}

#[test]
fn binary_reproduces_the_divergent_family() {
    let dir = tempfile::tempdir().unwrap();
    let status = derham()
        .args(["run", "--experiment", "reproduce-ex46", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let json = read_json(dir.path(), "reproduce-ex46");
    assert_eq!(json["result"]["verdict"], "DIVERGED");
    let exponent = json["result"]["exponent"].as_f64().unwrap();
    assert!((exponent + 1.0).abs() < 0.1, "{exponent}");

    // divergence with convergence expected flips the exit status to 2
    let dir2 = tempfile::tempdir().unwrap();
    let status = derham()
        .args([
            "run",
            "--experiment",
            "reproduce-ex46",
            "--expect-convergence",
            "--out",
        ])
        .arg(dir2.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_output_is_deterministic() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    for dir in [&dir1, &dir2] {
        let status = derham()
            .args(["run", "--experiment", "reproduce-kronecker", "--out"])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        read_csv(dir1.path(), "reproduce-kronecker"),
        read_csv(dir2.path(), "reproduce-kronecker")
    );
}

#[test]
fn fixture_catalog_lists_and_filters() {
    let out = derham().arg("fixtures").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5, "{text}");

    let out = derham().args(["fixtures", "--json"]).output().unwrap();
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(parsed.as_array().unwrap().len() >= 5);

    let out = derham().args(["fixtures", "--tag", "2"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().all(|l| l.contains("[2.")));
}

#[test]
fn invalid_scene_exits_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    std::fs::write(
        &path,
        r#"{ "schema": 1, "dim": 2, "currents": { "s": { "type": "sum", "terms": [ { "coeff": 1.0, "current": "T9" } ] } } }"#,
    )
    .unwrap();
    let out = derham()
        .args(["run", "--experiment", "anything", "--scene"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("T9"), "{err}");
}
