use std::path::Path;
use std::process::{Command, Output};

fn edgebench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgebench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_matrix(dir: &Path, algorithms: &str, sizes: &str, resolutions: &str, reps: usize) -> std::path::PathBuf {
    let path = dir.join("m.toml");
    std::fs::write(
        &path,
        format!(
            r#"
algorithms = [{algorithms}]
sizes = [{sizes}]
resolutions = [{resolutions}]
repetitions = {reps}
output = "records.csv"

[[datasets]]
name = "tiny"
n_classes = 2
sparsity = 0.2

[classifiers.logreg]
learning_rate = 0.1
iterations = 30
l2 = 0.0001
seed = 0
"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(edgebench(&["bench", "run", "--bogus"]).status.code(), Some(1));
    assert_eq!(edgebench(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(edgebench(&["fit", "--model", "tree", "--in", "a", "--out", "b"]).status.code(), Some(1));
    let help = edgebench(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("bench"));
}

#[test]
fn runtime_failures_exit_2() {
    let out = edgebench(&["bench", "run", "--config", "/nonexistent/m.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn one_config_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    std::fs::write(
        &path,
        r#"
algorithms = ["knn"]
phases = ["train"]
sizes = [40]
resolutions = [8]
repetitions = 1
output = "records.csv"

[[datasets]]
name = "tiny"
n_classes = 2
"#,
    )
    .unwrap();
    let out = edgebench(&["bench", "run", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with(
        "algorithm,phase,dataset,n_images,resolution,channels,n_classes,color,device,workers,rep,seed,duration_s,energy_j,accuracy,status"
    ));
    let again = edgebench(&["bench", "run", "--config", s(&path), "--resume"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 runs executed, 1 skipped"));
}

#[test]
fn fit_predict_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_matrix(dir.path(), r#""knn", "logreg""#, "300, 600", "17, 22", 2);
    assert_eq!(edgebench(&["bench", "run", "--config", s(&m)]).status.code(), Some(0));
    let records = dir.path().join("records.csv");

    for kind in ["rf", "gp", "ols"] {
        let model = dir.path().join(format!("{kind}.bin"));
        let fit = edgebench(&["fit", "--model", kind, "--in", s(&records), "--out", s(&model), "--n-trees", "20"]);
        assert_eq!(fit.status.code(), Some(0), "{}", String::from_utf8_lossy(&fit.stderr));

        let pred = edgebench(&[
            "predict", "--model", s(&model), "--algorithm", "knn", "--phase", "test", "--resolution", "22",
            "--n-images", "600", "--n-classes", "2",
        ]);
        assert_eq!(pred.status.code(), Some(0), "{}", String::from_utf8_lossy(&pred.stderr));
        let v: serde_json::Value = serde_json::from_slice(&pred.stdout).unwrap();
        assert!(v["energy_j"].as_f64().unwrap().is_finite());

        let eval = edgebench(&["evaluate", "--model", s(&model), "--in", s(&records)]);
        assert_eq!(eval.status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
        assert!(v.get("r_squared").is_some());
        assert_eq!(v["groups"].as_array().unwrap().len(), 4);
    }

    let batch = edgebench(&["predict", "--model", s(&dir.path().join("rf.bin")), "--in", s(&records)]);
    assert_eq!(batch.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&batch.stdout).lines().count(), 1 + 32);

    let imp = edgebench(&["importance", "--model", s(&dir.path().join("rf.bin"))]);
    assert_eq!(imp.status.code(), Some(0));
    let total: f64 = String::from_utf8_lossy(&imp.stdout)
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-5);
    assert_eq!(edgebench(&["importance", "--model", s(&dir.path().join("ols.bin"))]).status.code(), Some(2));

    let plots = dir.path().join("plots");
    let rep = edgebench(&["report", "--in", s(&records), "--plot-data", s(&plots)]);
    assert_eq!(rep.status.code(), Some(0));
    assert!(plots.join("energy_vs_size.csv").exists());
    assert!(plots.join("energy_vs_resolution.csv").exists());
}

#[test]
fn dataset_commands() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("toy.csv");
    let gen = edgebench(&[
        "dataset", "gen", "--out", s(&base), "--n-images", "60", "--resolution", "12", "--classes", "3",
    ]);
    assert_eq!(gen.status.code(), Some(0), "{}", String::from_utf8_lossy(&gen.stderr));
    let out_dir = dir.path().join("std");
    let st = edgebench(&[
        "dataset", "standardize", "--in", s(&base), "--sizes", "30,60", "--resolutions", "6,8", "--out-dir", s(&out_dir),
    ]);
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 4);
    assert!(out_dir.join("toy-30-6.csv").exists());
    let too_big = edgebench(&[
        "dataset", "standardize", "--in", s(&base), "--sizes", "90", "--out-dir", s(&out_dir),
    ]);
    assert_eq!(too_big.status.code(), Some(2));
    let bad = edgebench(&["dataset", "gen", "--out", s(&base), "--n-images", "61", "--classes", "3"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("n_images"));
}
