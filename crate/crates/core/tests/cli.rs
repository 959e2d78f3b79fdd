use std::path::Path;
use std::process::{Command, Output};

use crowdagg::FitResult;

fn crowdagg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdagg"))
        .args(args)
        .current_dir(dir)
        .env("CROWDAGG_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

const CONFIG: &str = r#"
[data]
path = "d.csv"

[synth]
I = 6
J = 8
M = 3
kind = "ImpCDM"
seed = 2

[optimizer]
max_steps = 400
restarts = 3
"#;

#[test]
fn synth_then_fit_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();

    let synth = crowdagg(&["synth", "--config", "c.toml", "--out", "d.csv"], dir.path());
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    assert!(dir.path().join("d.csv").exists());
    assert!(dir.path().join("d.truth.json").exists());

    let fit = crowdagg(&["fit", "--model", "ImpCDM", "--config", "c.toml"], dir.path());
    assert_eq!(fit.status.code(), Some(0), "{}", String::from_utf8_lossy(&fit.stderr));
    let result: FitResult = serde_json::from_slice(&fit.stdout).unwrap();
    assert_eq!(result.kind, crowdagg::ModelKind::ImpCdm);
    assert_eq!(result.params.n_targets(), 6);
    assert!(result.final_objective >= result.initial_objective);
}

#[test]
fn unknown_model_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = crowdagg(&["fit", "--model", "SuperModel", "--data", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("SuperModel"));
}

#[test]
fn out_of_range_grade_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.csv"),
        "worker_id,target_id,criterion_id,grade,condition\nw1,t1,c1,3,SIMUL\nw1,t1,c2,7,SIMUL\n",
    )
    .unwrap();
    let out = crowdagg(&["fit", "--model", "CIM", "--data", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "data");
    assert!(err["message"].as_str().unwrap().contains("line 3"));

    let out = crowdagg(&["validate", "--data", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_and_bad_config_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = crowdagg(&["fit", "--model", "CIM", "--data", "nope.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(dir.path().join("c.toml"), "[optimizer]\nlearning_rate = -1.0\n").unwrap();
    let out = crowdagg(&["validate", "--config", "c.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = crowdagg(&["experiment"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn paired_synth_analyze_and_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[data]
path = "pair.csv"

[synth]
I = 8
J = 12
M = 3
kind = "ImpCDM"
seed = 5

[optimizer]
max_steps = 300

[experiment]
models = ["CIM", "ImpCDM"]
n_workers_range = [5, 6]
trials = 2
"#;
    std::fs::write(dir.path().join("c.toml"), config).unwrap();
    let out = crowdagg(&["synth", "--paired", "--config", "c.toml", "--out", "pair.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = crowdagg(&["validate", "--config", "c.toml"], dir.path());
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["datasets"][0]["indv_responses"], 8 * 12 * 3);
    assert_eq!(summary["datasets"][0]["simul_responses"], 8 * 12 * 3);

    let out = crowdagg(&["analyze", "--config", "c.toml", "--out", "stats.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["inter_criteria_tests"]["variances_welch"]["test"], "WelchT");
    assert!(stats["grade_distribution"]["INDV"].is_array());

    let out = crowdagg(&["experiment", "--config", "c.toml", "--format", "csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("Model,Potential,c0,c1,c2"));
    assert_eq!(lines.next().unwrap().split(',').next(), Some("CIM (n=5)"));
    assert_eq!(csv.lines().count(), 5);
}
