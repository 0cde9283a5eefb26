use std::path::Path;
use std::process::{Command, Output};

use pvcg::experiment::{ExperimentConfig, ProbeCounts, SurfaceSpec};
use pvcg::harness::DeviationSampler;
use pvcg::learner::TrainingConfig;
use pvcg::PriorSupport;

fn pvcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvcg")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let config = ExperimentConfig {
        support: PriorSupport::reference(3, 2),
        training: TrainingConfig { epochs: 5, samples_per_epoch: 32, ..Default::default() },
        surface: SurfaceSpec { resolution: [6, 6], ..Default::default() },
        probes: ProbeCounts {
            dsic_trials: 10,
            deviations: DeviationSampler { per_trial: 10, ..Default::default() },
            ex_post_trials: 50,
            lemma1_trials: 50,
            efficiency_trials: 5,
            inequality_samples: 20,
            assumption_samples: 50,
        },
        ..Default::default()
    };
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_two_producers() {
    let dir = tempfile::tempdir().unwrap();
    let economy = dir.path().join("economy.json");
    std::fs::write(
        &economy,
        r#"{"n": 2, "m": 1, "capacities": [1.0, 1.0], "cost_types": [0.1, 10.0], "valuation_types": [1.0],
            "valuation_family": {"kind": "sqrt_sum"}, "cost_family": {"kind": "linear"}}"#,
    )
    .unwrap();
    let out = pvcg(&["simulate", economy.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let breakdown: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p0 = breakdown["total"][0].as_f64().unwrap();
    assert!((p0 - 1.364_213_562).abs() < 1e-8);
}

#[test]
fn simulate_rejects_mismatched_economy() {
    let dir = tempfile::tempdir().unwrap();
    let economy = dir.path().join("economy.json");
    std::fs::write(
        &economy,
        r#"{"n": 3, "m": 1, "capacities": [1.0, 1.0], "cost_types": [0.1, 0.2], "valuation_types": [1.0],
            "valuation_family": {"kind": "sqrt_sum"}, "cost_family": {"kind": "linear"}}"#,
    )
    .unwrap();
    let out = pvcg(&["simulate", economy.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_method_and_adjustment_are_errors() {
    assert!(!pvcg(&["--method", "simplex", "check-assumptions"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = pvcg(&["--adjustment", "magic", "--out", dir.path().to_str().unwrap(), "surface"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_assumptions_flags_counterexample_family() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = pvcg(&["--config", &config, "--out", out_dir.to_str().unwrap(), "check-assumptions"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    value["technology"]["valuation_family"] = serde_json::json!({"kind": "custom", "name": "squared_sum"});
    std::fs::write(&config, value.to_string()).unwrap();
    let out = pvcg(&["--config", &config, "--out", out_dir.to_str().unwrap(), "check-assumptions"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("assumptions.json")).unwrap()).unwrap();
    assert!(!report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn train_then_surface_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.to_str().unwrap();
    pvcg(&["--config", &config, "--out", out_arg, "train"]);
    let model = out_dir.join("model.json");
    assert!(model.exists());
    let trace = std::fs::read_to_string(out_dir.join("loss_trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,loss\n"));
    let steps = std::fs::read_to_string(out_dir.join("step_trace.csv")).unwrap();
    assert!(steps.starts_with("step,epoch,loss\n"));
    assert_eq!(steps.lines().count(), 1 + 5);

    let adjustment = format!("learned:{}", model.display());
    let out = pvcg(&["--config", &config, "--out", out_arg, "--adjustment", &adjustment, "surface"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let surface = std::fs::read_to_string(out_dir.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 36);
}

#[test]
fn verify_zero_adjustment_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = pvcg(&["--config", &config, "--out", out_dir.to_str().unwrap(), "--seed", "7", "verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert_eq!(report["adjustment"], "zero");
}

#[test]
fn weak_punishment_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = pvcg(&["--config", &config, "--out", dir.path().to_str().unwrap(), "--punishment", "0.01", "verify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("punishment"));
}
