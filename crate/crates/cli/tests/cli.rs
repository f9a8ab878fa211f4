use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lamc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lamc")).args(args).output().expect("binary runs")
}

fn generate(dir: &Path, rows: usize, cols: usize) -> (PathBuf, PathBuf) {
    let (m, t) = (dir.join("a.mtx"), dir.join("truth.json"));
    let out = lamc(&[
        "generate",
        "--rows", &rows.to_string(),
        "--cols", &cols.to_string(),
        "--clusters", "3",
        "--row-fraction", "0.2",
        "--col-fraction", "0.2",
        "--signal", "0.9",
        "--noise", "0.01",
        "--seed", "4",
        "--out", m.to_str().unwrap(),
        "--truth-out", t.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (m, t)
}

#[test]
fn generate_then_run_recovers_planted_structure() {
    let dir = tempfile::tempdir().unwrap();
    let (m, t) = generate(dir.path(), 300, 240);
    let report = dir.path().join("report.json");
    let labels = dir.path().join("labels.csv");
    let out = lamc(&[
        "run", "--input", m.to_str().unwrap(), "--k", "4", "--workers", "2",
        "--truth", t.to_str().unwrap(), "--out", report.to_str().unwrap(),
        "--labels-csv", labels.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["metrics"]["detection"]["detected"], 3);
    let full: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(full["col_labels"].as_array().unwrap().len(), 240);
    let csv = std::fs::read_to_string(&labels).unwrap();
    assert_eq!(csv.lines().count(), 1 + 300 + 240);
}

#[test]
fn plan_prints_grid_and_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = generate(dir.path(), 200, 200);
    let out = lamc(&["plan", "--input", m.to_str().unwrap(), "--grid", "2x2", "--min-rounds", "3"]);
    assert!(out.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["m"], 2);
    assert_eq!(plan["rounds"], 3);
}

#[test]
fn metrics_on_label_files() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.csv");
    let truth = dir.path().join("truth.csv");
    std::fs::write(&pred, "label\n0\n0\n1\n1\n").unwrap();
    std::fs::write(&truth, "0\n1\n0\n1\n").unwrap();
    let out = lamc(&["metrics", pred.to_str().unwrap(), truth.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ari"], -0.5);
    assert_eq!(v["nmi"], 0.0);
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = generate(dir.path(), 200, 160);
    let csv = dir.path().join("bench.csv");
    let out = lamc(&[
        "bench", "--input", m.to_str().unwrap(), "--sweep", "workers=1,2", "--sweep", "grid=1x1,2x2",
        "--repeat", "1", "--csv", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // missing input
    let out = lamc(&["run", "--input", "/nonexistent/a.mtx"]);
    assert_eq!(out.status.code(), Some(3));
    // malformed matrix
    let bad = dir.path().join("bad.mtx");
    std::fs::write(&bad, "not a matrix\n").unwrap();
    assert_eq!(lamc(&["run", "--input", bad.to_str().unwrap()]).status.code(), Some(3));
    let (m, _) = generate(dir.path(), 100, 100);
    let m = m.to_str().unwrap();
    // k below 2
    assert_eq!(lamc(&["run", "--input", m, "--k", "1"]).status.code(), Some(2));
    // unknown flag
    assert_eq!(lamc(&["run", "--input", m, "--bogus"]).status.code(), Some(2));
    // unreachable threshold
    assert_eq!(lamc(&["plan", "--input", m, "--p-thresh", "1.0"]).status.code(), Some(2));
    // all-zero input
    let zero = dir.path().join("zero.mtx");
    std::fs::write(&zero, "%%MatrixMarket matrix coordinate real general\n10 10 0\n").unwrap();
    let out = lamc(&["run", "--input", zero.to_str().unwrap(), "--grid", "1x1"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty block"));
}

#[test]
fn log_level_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = generate(dir.path(), 120, 120);
    let out = Command::new(env!("CARGO_BIN_EXE_lamc"))
        .args(["run", "--input", m.to_str().unwrap(), "--grid", "2x2"])
        .env("LAMC_LOG", "debug")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("round 0 block"));
}
