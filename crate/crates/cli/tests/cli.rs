use std::path::PathBuf;
use std::process::{Command, Output};

fn force(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_force"))
        .args(args)
        .output()
        .expect("spawn force")
}

fn heart() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/processed.cleveland.data")
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(force(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(force(&["run", "--dataset", "mushrooms"]).status.code(), Some(1));
    assert_eq!(force(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = force(&[
        "explain",
        "--dataset",
        "heart",
        "--data-path",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "n_seeds = \"many\"\n").unwrap();
    let out = force(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&cfg, "k_values = [0]\n").unwrap();
    let out = force(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kernel_without_k_is_rejected() {
    if !heart().is_file() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = force(&[
        "cluster",
        "--dataset",
        "heart",
        "--data-path",
        heart().to_str().unwrap(),
        "--kernel",
        "linear",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn explain_and_cluster_write_their_files() {
    if !heart().is_file() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let data = heart();
    let common = [
        "--dataset",
        "heart",
        "--data-path",
        data.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ];
    let out = force(&[&["explain"], &common[..]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let shap = std::fs::read_to_string(dir.path().join("shap_heart.csv")).unwrap();
    assert_eq!(shap.lines().count(), 1 + 303);
    assert!(dir.path().join("gbm_heart.txt").is_file());

    let out = force(&[&["cluster", "--kernel", "rbf(gamma=0.1)", "--k", "3"], &common[..]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let clusters = std::fs::read_to_string(dir.path().join("clusters_heart.csv")).unwrap();
    let rows: Vec<&str> = clusters.lines().skip(1).collect();
    assert_eq!(rows.len(), 303);
    assert!(rows.iter().all(|r| matches!(r.rsplit(',').next(), Some("0" | "1" | "2"))));
}
