use std::path::Path;
use std::process::{Command, Output};

fn mlhoqmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlhoqmc"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn cbc_then_points() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("v.txt");
    let out = mlhoqmc(dir.path(), &["cbc", "--m", "4", "--s", "3", "--out", file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.lines().any(|l| l.trim() == "2 4 2 3"));
    let out = mlhoqmc(dir.path(), &["points", "--vector", file.to_str().unwrap()]);
    assert!(out.status.success());
    let rows: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(rows.len(), 16);
    assert_eq!(rows[0], "0,0,0");
    assert!(rows.iter().all(|r| r.split(',').count() == 3));
}

#[test]
fn forward_reports_functionals() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlhoqmc(dir.path(), &["forward", "--level", "2", "--y", "0.1,-0.2"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(json["qoi"].as_f64().unwrap() > 0.0);
    let out = mlhoqmc(dir.path(), &["forward", "--y", "0.9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[noise]\ngamma = -1.0\n").unwrap();
    let out = mlhoqmc(dir.path(), &["--config", cfg.to_str().unwrap(), "gen-data"]);
    assert_eq!(out.status.code(), Some(2));
    let out = mlhoqmc(dir.path(), &["fit", "/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = mlhoqmc(dir.path(), &["gen-data", "--level", "3", "--seed", "9"]);
    let b = mlhoqmc(dir.path(), &["gen-data", "--level", "3", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(dir.path().join("data.json").exists());
}

const SMALL_STUDY: &str = r#"
[study]
levels = [0, 1, 2]
reference_level = 3
kinds = ["sl-ratio", "ml-ratio", "ml-split", "mlmc-split"]
[mc]
repetitions = 2
"#;

#[test]
fn study_needs_vectors_or_build_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(&cfg, SMALL_STUDY).unwrap();
    let out = mlhoqmc(dir.path(), &["--config", cfg.to_str().unwrap(), "study"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--build-cbc"));
}

#[test]
fn study_is_reproducible_and_fittable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(&cfg, SMALL_STUDY).unwrap();
    let args = ["--config", cfg.to_str().unwrap(), "--build-cbc", "study"];
    let out = mlhoqmc(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("study_gamma_1.csv");
    let first = std::fs::read(&csv).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.starts_with("kind,L,work,error,value\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["parts"][0]["data"]["delta"].is_number());
    assert!(!manifest["vector_files"].as_object().unwrap().is_empty());

    // second run reads the stored vectors without rebuilding
    let out = mlhoqmc(dir.path(), &["--config", cfg.to_str().unwrap(), "--threads", "2", "study"]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), first);

    let out = mlhoqmc(dir.path(), &["fit", csv.to_str().unwrap(), "--skip", "0"]);
    assert!(out.status.success());
    assert!(stdout(&out).lines().any(|l| l.starts_with("ml-split,-")));
}
