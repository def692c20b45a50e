use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let config = json!({
        "T": 2.0,
        "m": 5,
        "n": 6,
        "gamma": 1e-3,
        "kernels": [{"variant": "gaussian", "bandwidth": 10.0}, {"variant": "bilinear"}],
        "dt": 0.01,
        "test_count": 8,
        "rng_seed": 7
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn sosid(args: &[&str], config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_sosid"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(sosid(&["generate"], &config, &a), 0);
    assert_eq!(sosid(&["generate"], &config, &b), 0);
    let bytes_a = std::fs::read(a.join("dataset.json")).unwrap();
    assert_eq!(bytes_a, std::fs::read(b.join("dataset.json")).unwrap());
    assert_eq!(
        std::fs::read(a.join("trajectories/train_6.csv")).unwrap(),
        std::fs::read(b.join("trajectories/train_6.csv")).unwrap()
    );

    let data = read(&a.join("dataset.json"));
    assert_eq!(data["m"], 5);
    assert_eq!(data["n"], 6);
    assert_eq!(data["T"], 2.0);
    assert_eq!(data["inputs"][0], json!([1.0, 0.0, 0.0, 0.0, 0.0]));
    assert_eq!(data["inputs"][5], json!([1.0, 1.0, 0.0, 0.0, 0.0]));
    assert_eq!(data["outputs"].as_array().unwrap().len(), 6);
    assert_eq!(data["projection_errors"].as_array().unwrap().len(), 6);
    assert_eq!(data["config"]["rng_seed"], 7);
    assert!(data["rng"]["algorithm"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn fit_and_evaluate_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(sosid(&["generate"], &config, &out), 0);
    assert_eq!(sosid(&["fit"], &config, &out), 0);
    assert!(out.join("models/gaussian_10.sos.json").exists());
    assert!(out.join("models/bilinear.representer.json").exists());
    let report = read(&out.join("fit_report.json"));
    for fit in report["fits"].as_array().unwrap() {
        assert_eq!(fit["solver_status"], "optimal");
        assert_eq!(fit["nonnegativity_certified"], true);
        assert!(fit["misfit"].as_f64().unwrap() >= 0.0);
    }

    assert_eq!(sosid(&["evaluate"], &config, &out), 0);
    let metrics = read(&out.join("metrics/gaussian_10.json"));
    for key in ["misfit", "avg_relative_error", "min_quadratic_form", "solver_status"] {
        assert!(metrics.get(key).is_some(), "missing {key}");
    }
    assert_eq!(metrics["relative_errors"].as_array().unwrap().len(), 8);
    assert!(metrics["min_quadratic_form"].as_f64().unwrap() >= -1e-8);
    assert_eq!(metrics["config"]["test_count"], 8);
    assert_eq!(read(&out.join("metrics.json"))["metrics"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_dataset_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    assert_eq!(sosid(&["fit"], &config, &dir.path().join("empty")), 4);
}

#[test]
fn tampered_model_is_invariant_violation() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(sosid(&["generate"], &config, &out), 0);
    assert_eq!(sosid(&["fit"], &config, &out), 0);
    let path = out.join("models/bilinear.sos.json");
    let mut model = read(&path);
    let dim = model["M"].as_array().unwrap().len();
    model["M"] = json!(vec![-1.0; dim]);
    std::fs::write(&path, model.to_string()).unwrap();
    assert_eq!(sosid(&["evaluate"], &config, &out), 3);
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"T": 2.0, "bogus": 1}"#).unwrap();
    assert_ne!(sosid(&["generate"], &path, &dir.path().join("out")), 0);
}

#[test]
fn reproduce_writes_summary_plots_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("run");
    let code = sosid(&["reproduce-paper"], &config, &out);
    assert!(code == 0 || code == 1, "exit code {code}");
    let summary = read(&out.join("summary.json"));
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
    let verdict = read(&out.join("verdict.json"));
    assert_eq!(verdict["pass"], code == 0);
    assert!(verdict["thresholds"]["gaussian_misfit_max"].is_number());
    assert!(verdict["checks"].as_array().unwrap().iter().any(|c| c["name"] == "gaussian_misfit"));

    let plot = std::fs::read_to_string(out.join("plots/train_1.csv")).unwrap();
    assert!(plot.starts_with("t,u,y_true,y_true_projected,y_gaussian_10,y_bilinear\n"));
    assert_eq!(plot.lines().count(), 402);
    assert!(out.join("plots/test_3.csv").exists());

    let again = dir.path().join("again");
    assert_eq!(sosid(&["reproduce-paper"], &config, &again), code);
    assert_eq!(
        std::fs::read(out.join("summary.json")).unwrap(),
        std::fs::read(again.join("summary.json")).unwrap()
    );
}
