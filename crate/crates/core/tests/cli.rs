use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tracereg::io::read_matrix_csv;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracereg")).args(args).env_remove("TRACEREG_SEED").output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_glm_trace_writes_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("theta.csv");
    let o = run(&[
        "fit", "--model", "glm-trace", "--design", s(&data("glm_design.csv")), "--response",
        s(&data("glm_response.csv")), "--lambda", "0.03", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["model"], "glm-trace");
    assert_eq!(v["diagnostics"]["converged"], true);
    assert!(v["diagnostics"]["kkt_operator_norm"].as_f64().unwrap() <= 0.03 * 1.01);
    assert_eq!(read_matrix_csv(&out).unwrap().shape(), (3, 3));
}

#[test]
fn fit_rrr_and_onebit_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = run(&[
        "fit", "--model", "rrr", "--design", s(&data("rrr_x.csv")), "--response", s(&data("rrr_y.csv")),
        "--lambda-auto", "0.5", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_matrix_csv(&out).unwrap().shape(), (3, 4));

    let o = run(&[
        "fit", "--model", "onebit", "--design", s(&data("onebit.csv")), "--config", s(&data("onebit.conf")),
        "--dim", "6", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let theta = read_matrix_csv(&out).unwrap();
    assert_eq!(theta.shape(), (6, 6));
    assert!(theta.max_abs() <= 4.0 / 6.0 + 1e-12);
    // a flag overrides the config file
    let o = run(&[
        "fit", "--model", "onebit", "--design", s(&data("onebit.csv")), "--config", s(&data("onebit.conf")),
        "--lambda", "100", "--out", s(&out),
    ]);
    assert!(o.status.success());
    assert_eq!(json(&o)["lambda"], 100.0);
    assert_eq!(json(&o)["diagnostics"]["rank"], 0);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&["fit", "--model", "glm-trace", "--design", s(&data("glm_design.csv")), "--response", s(&data("glm_response.csv")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--lambda"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0,0,1\n1,1,0\n0,7,1\n").unwrap();
    let o = run(&["fit", "--model", "onebit", "--design", s(&bad), "--dim", "3", "--lambda", "0.1", "--R", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));

    let o = run(&["fit", "--model", "nonsense", "--design", "x", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["fit", "--model", "onebit", "--design", s(&data("onebit.csv")), "--lambda", "0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

fn simulate(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["simulate", "--out-dir", s(dir), "--seed", "11", "--reps", "1"];
    all.extend_from_slice(args);
    run(&all)
}

#[test]
fn simulate_smoke_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 3] = [
        &["--study", "rate", "--kind", "matrix-reg", "--dims", "4,6", "--grid", "200,400"],
        &["--study", "alignment", "--kind", "rrr", "--dims", "4,6", "--grid", "20,40"],
        &["--study", "glm-vs-linear", "--dims", "6", "--grid", "2,4"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let d = dir.path().join(k.to_string());
        let o = simulate(&d, args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["seed"], 11);
        assert!(std::fs::read_to_string(d.join("results.csv")).unwrap().lines().count() > 1);
        assert!(String::from_utf8_lossy(&o.stdout).contains("study"));
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tracereg"))
        .args(["simulate", "--study", "glm-vs-linear", "--dims", "4", "--grid", "2", "--reps", "1", "--out-dir", s(dir.path())])
        .env("TRACEREG_SEED", "42")
        .output()
        .unwrap();
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
}
