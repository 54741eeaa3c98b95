use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pvi_cli::table::{ALPHA_CONVERGENCE_HEADER, REFINEMENT_HEADER, RESIDUAL_NORMS_HEADER};
use pvi_cli::{ExperimentConfig, Manifest};
use serde_json::Value;

const MINIMAL: &str = r#"{
    "problem": "unconstrained_linear",
    "method": "chain",
    "grid": {"n_steps": 50, "n_space": 100, "x_min": 20, "x_max": 500},
    "sweep": {"alphas": [1]}
}"#;

const FULL_SWEEP: &str = r#"{
    "problem": {"name": "obstacle_put", "params": {"rate": 0.05, "strike": 100, "vol": 0.2}},
    "method": "fd",
    "grid": {"n_steps": 100, "n_space": 100, "x_min": 20, "x_max": 500},
    "sweep": {"alphas": [16, 64, 256, 1024]},
    "analyses": ["residual", "supersolution_family", "dominance", "skorohod", "refine"]
}"#;

fn pvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(config: &Path) -> Manifest {
    let out = pvi(&["run", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"], "ok");
    let dir = PathBuf::from(summary["output_dir"].as_str().unwrap());
    Manifest::load(&dir.join("manifest.json")).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("error json on stderr")
}

#[test]
fn minimal_config_writes_one_surface() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_ok(&write_config(dir.path(), MINIMAL));
    let paths: Vec<_> = manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(paths, ["surface_alpha_1.csv", "surface_alpha_1.json"]);
    for a in &manifest.artifacts {
        let bytes = fs::read(dir.path().join("output").join(&a.path)).unwrap();
        assert_eq!(a.bytes, bytes.len() as u64);
        assert_eq!(a.sha256, pvi_cli::artifacts::sha256_hex(&bytes));
    }
}

#[test]
fn repeated_runs_have_identical_hashes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_ok(&write_config(a.path(), MINIMAL));
    let mb = run_ok(&write_config(b.path(), MINIMAL));
    assert_eq!(ma.artifacts, mb.artifacts);
    assert_eq!(
        fs::read(a.path().join("output/manifest.json")).unwrap(),
        fs::read(b.path().join("output/manifest.json")).unwrap()
    );
}

#[test]
fn full_sweep_artifact_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_ok(&write_config(dir.path(), FULL_SWEEP));
    let count = |pred: &dyn Fn(&str) -> bool| manifest.artifacts.iter().filter(|a| pred(&a.path)).count();
    // 4 surfaces (values and grid sidecar each), 1 convergence report,
    // 1 residual report per alpha, and one report per remaining analysis.
    assert_eq!(count(&|p| p.starts_with("surface_alpha_") && p.ends_with(".csv")), 4);
    assert_eq!(count(&|p| p.starts_with("surface_alpha_") && p.ends_with(".json")), 4);
    assert_eq!(count(&|p| p == "convergence.json"), 1);
    assert_eq!(count(&|p| p.starts_with("residual_alpha_")), 4);
    for single in ["dominance.json", "skorohod.json", "supersolution_family.json", "refine.json"] {
        assert!(manifest.artifact(single).is_some(), "{single}");
    }
    assert_eq!(manifest.artifacts.len(), 17);

    let out_dir = dir.path().join("output");
    let conv: Value = serde_json::from_slice(&fs::read(out_dir.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(conv["kind"], "convergence_report");
    let meta = conv["surfaces_meta"].as_array().unwrap();
    assert_eq!(meta.len(), 4);
    for m in meta {
        assert!(out_dir.join(m["path"].as_str().unwrap()).exists());
    }
}

#[test]
fn tables_have_documented_shapes() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&write_config(dir.path(), FULL_SWEEP));
    let out_dir = dir.path().join("output");

    let conv = pvi(&["table", out_dir.join("convergence.json").to_str().unwrap(), "--kind", "alpha_convergence"]);
    assert!(conv.status.success());
    let text = String::from_utf8(conv.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], ALPHA_CONVERGENCE_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[1].split(',').nth(2).unwrap().is_empty());

    let res = pvi(&["table", out_dir.join("residual_alpha_1024.json").to_str().unwrap(), "--kind", "residual_norms"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text.lines().next(), Some(RESIDUAL_NORMS_HEADER));
    assert_eq!(text.lines().count(), 2);

    let all = pvi(&["table", out_dir.join("manifest.json").to_str().unwrap(), "--kind", "residual_norms"]);
    assert_eq!(String::from_utf8(all.stdout).unwrap().lines().count(), 5);
}

#[test]
fn refinement_table_leaves_first_order_blank() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "problem": "unconstrained_linear",
        "method": "fd",
        "grid": {"n_steps": 25, "n_space": 50, "x_min": 20, "x_max": 500},
        "sweep": {"alphas": [0]},
        "analyses": ["refine"]
    }"#;
    run_ok(&write_config(dir.path(), config));
    let out = pvi(&["table", dir.path().join("output/refine.json").to_str().unwrap(), "--kind", "refinement"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(text.lines().next(), Some(REFINEMENT_HEADER));
    assert_eq!(rows.len(), 3);
    assert!(rows[0][5].is_empty());
    for row in &rows[1..] {
        let order: f64 = row[5].parse().unwrap();
        assert!(order > 0.5 && order < 2.5, "order {order}");
    }
}

#[test]
fn echoed_config_reparses_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_ok(&write_config(dir.path(), FULL_SWEEP));
    let echoed = serde_json::to_string(&manifest.config).unwrap();
    let reparsed = ExperimentConfig::from_json(&echoed).unwrap();
    assert_eq!(reparsed, manifest.config);
    assert_eq!(reparsed, ExperimentConfig::from_json(FULL_SWEEP).unwrap());
}

#[test]
fn unknown_key_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &MINIMAL.replace("\"x_max\"", "\"xmax\""));
    for verb in ["run", "validate"] {
        let err = stderr_json(&pvi(&[verb, path.to_str().unwrap()]));
        assert_eq!(err["error"], "config");
        assert_eq!(err["key"], "grid.xmax");
    }
    assert!(!dir.path().join("output").exists());
}

#[test]
fn validate_accepts_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = pvi(&["validate", write_config(dir.path(), FULL_SWEEP).to_str().unwrap()]);
    assert!(out.status.success());
    assert!(!dir.path().join("output").exists());
}

#[test]
fn table_kind_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&write_config(dir.path(), MINIMAL));
    let sidecar = dir.path().join("output/surface_alpha_1.json");
    let err = stderr_json(&pvi(&["table", sidecar.to_str().unwrap(), "--kind", "alpha_convergence"]));
    assert_eq!(err["error"], "kind_mismatch");
}

#[test]
fn solver_errors_carry_context() {
    let dir = tempfile::tempdir().unwrap();
    // An explicit scheme this coarse in time violates its stability bound.
    let config = r#"{
        "problem": "obstacle_put",
        "method": "fd",
        "grid": {"n_steps": 5, "n_space": 400, "x_min": 20, "x_max": 500},
        "scheme": {"theta": 0},
        "sweep": {"alphas": [1]}
    }"#;
    let err = stderr_json(&pvi(&["run", write_config(dir.path(), config).to_str().unwrap()]));
    assert_eq!(err["error"], "solver");
    assert!(err["solver_error"].is_string());
}
