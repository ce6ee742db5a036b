use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_nozzleflow");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--set").arg(format!("output.dir={}", dir.display()));
    cmd.env_remove("NOZZLEFLOW_THREADS");
    if let Some(t) = threads {
        cmd.env("NOZZLEFLOW_THREADS", t);
    }
    cmd.output().unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn solve1d_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let out = run(&["solve1d", "--config", cfg.to_str().unwrap(), "--set", "n1=2001"], tmp.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&tmp.path().join("flow1d.csv"));
    assert_eq!(header, ["x1", "a", "u", "rho", "p", "M2"]);
    assert_eq!(rows.len(), 2001);
    let j = rows[0][1] * rows[0][2] * rows[0][3];
    for r in &rows {
        assert!((r[1] * r[2] * r[3] - j).abs() <= 1e-12 * j);
        assert!((r[0] < 0.0) == (r[5] < 1.0) || r[0] == 0.0);
    }
    let summary: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("flow1d.json")).unwrap()).unwrap();
    assert!(summary["bernoulli_residual"].as_f64().unwrap() <= 1e-11);
    let manifest: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "solve1d");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["solver"]["n1"], 2001);
    let names: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["flow1d.csv", "flow1d.json"]);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = config("quadratic.json");
    let args = ["solve2d-potential", "--config", cfg.to_str().unwrap(), "--set", "n1=101", "--set", "N=6"];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run(&args, a.path(), Some("1")).status.success());
    assert!(run(&args, b.path(), Some("3")).status.success());
    for f in ["potential.csv", "sonic_curve.csv", "potential.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let (header, _) = read_csv(&a.path().join("potential.csv"));
    assert_eq!(header, ["x1", "x2", "u1", "u2", "rho", "M2", "p"]);
    let (header, _) = read_csv(&a.path().join("sonic_curve.csv"));
    assert_eq!(header, ["x2", "xi", "dxi"]);
}

#[test]
fn euler_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let out = run(&["solve2d-euler", "--config", cfg.to_str().unwrap(), "--set", "n1=101", "--set", "N=6"], tmp.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&tmp.path().join("euler.csv"));
    assert_eq!(header, ["x1", "x2", "u1", "u2", "rho", "p", "B", "omega", "M2"]);
    assert!(rows.iter().any(|r| r[7].abs() > 1e-6));
    let conv: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("convergence.json")).unwrap()).unwrap();
    assert!(conv["outer"]["factors"].as_array().unwrap().iter().all(|f| f.as_f64().unwrap() < 1.0));
    assert!(!conv["inner"].as_array().unwrap().is_empty());
}

#[test]
fn shock_outside_range_is_a_solver_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let out = run(&["shock", "--config", cfg.to_str().unwrap(), "--set", "p_e=1.5"], tmp.path(), None);
    assert_eq!(out.status.code(), Some(3));
    let e = error_json(&out);
    assert_eq!(e["error"], "ExitPressureOutOfRange");
    assert_eq!(e["exit_code"], 3);
}

#[test]
fn shock_sweep_positions_increase() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("shock_sweep.json");
    let out = run(&["shock", "--config", cfg.to_str().unwrap()], tmp.path(), Some("2"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&tmp.path().join("shock_sweep.csv"));
    assert_eq!(rows.len(), 9);
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let c = cfg.to_str().unwrap();
    for (args, kind) in [
        (vec!["solve1d", "--config", c, "--set", "n1=400"], "ConfigInvalid"),
        (vec!["solve1d", "--config", "/nonexistent.json"], "ConfigRead"),
        (vec!["solve1d", "--config", c, "--set", "bogus=1"], "ConfigOverride"),
        (vec!["solve1d", "--config", c, "--set", "tol_fp=-1"], "ConfigInvalid"),
        (vec!["shock", "--config", config("throat_power6.json").to_str().unwrap()], "ConfigInvalid"),
    ] {
        let out = run(&args, tmp.path(), None);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_json(&out)["error"], kind, "{args:?}");
    }
    let out = run(&["solve1d", "--config", c], tmp.path(), Some("0"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "ConfigThreads");
}

#[test]
fn validate_reports_every_criterion() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let out = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path(), None);
    let report: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("validation.json")).unwrap()).unwrap();
    let criteria = report["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 11);
    for (k, c) in criteria.iter().enumerate() {
        assert_eq!(c["id"], k + 1);
        assert!(c["pass"].is_boolean());
    }
    assert_eq!(out.status.code(), Some(if report["passed"] == 11 { 0 } else { 3 }));
}
