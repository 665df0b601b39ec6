use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mrst(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrst"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

const MINIMAL_SOLVE: &str = r#"{
  "command": "solve",
  "diffusion": {"preset": "bm"},
  "interval": {"a": 0, "b": 1},
  "payoff": {"type": "const", "value": 1},
  "discount": 1,
  "rate": {"breakpoints": [0, 0.5, 1], "pieces": [{"type": "const", "value": 1}, {"type": "const", "value": 4}]}
}"#;

#[test]
fn minimal_solve_writes_the_expected_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "solve.json", MINIMAL_SOLVE);
    let out = dir.path().join("out");
    let res = mrst(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,J,J1,J2"));
    assert_eq!(lines.count(), 101);
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0.0000000000000000e0");
    assert_eq!(first[1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(report(&out)["verdict"], "pass");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn compare_on_a_preset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cmp.json",
        r#"{"command": "compare", "suite": "bm-n2-one", "options": {"n_paths": 20000, "seed": 4}}"#,
    );
    let out = dir.path().join("out");
    let res = mrst(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rep = report(&out);
    assert_eq!(rep["verdict"], "pass");
    assert_eq!(rep["rows"].as_array().unwrap().len(), 5);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("x,J_ode,J_analytic,J_mc,se_mc,z\n"));
}

#[test]
fn wrong_gluing_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"command": "compare", "suite": "bm-n2-one",
            "options": {"n_paths": 50000, "interface": "zero-derivative"}}"#,
    );
    let out = dir.path().join("out");
    let res = mrst(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(2));
    let rep = report(&out);
    assert_eq!(rep["verdict"], "fail");
    assert!(rep["max_abs_z"].as_f64().unwrap() > 3.0);
}

#[test]
fn negative_rate_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = MINIMAL_SOLVE.replace(r#""value": 4"#, r#""value": -4"#);
    let cfg = write_config(dir.path(), "neg.json", &body);
    let res = mrst(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("nonnegative"), "{err}");
}

#[test]
fn schema_violations_name_the_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = MINIMAL_SOLVE.replace(r#""discount": 1,"#, "\"discount\": 1,\n  \"discont\": 2,");
    let cfg = write_config(dir.path(), "typo.json", &body);
    let res = mrst(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("discont") && err.contains("line 7"), "{err}");
}

#[test]
fn manifest_rerun_reproduces_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"command": "simulate", "suite": "gbm-n3-call",
            "options": {"n_paths": 5000, "estimator": "both", "grid": {"uniform": 3}}}"#,
    );
    let first = dir.path().join("first");
    assert_eq!(mrst(&cfg, &first, &["--seed", "99", "--threads", "1"]).status.code(), Some(0));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert!(manifest["versions"]["mrst-core"].is_string());

    let second = dir.path().join("second");
    let res = mrst(&first.join("manifest.json"), &second, &["--threads", "3"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let a = fs::read(first.join("results.csv")).unwrap();
    assert_eq!(a, fs::read(second.join("results.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("x0,mean,se,n,kind\n"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn seed_flag_overrides_the_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"command": "simulate", "suite": "bm-n1-x", "options": {"n_paths": 1000, "seed": 1}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(mrst(&cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(mrst(&cfg, &b, &["--seed", "2"]).status.code(), Some(0));
    assert_ne!(fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
}

#[test]
fn measure_problems_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.json",
        r#"{"command": "solve",
            "diffusion": {"preset": "gbm", "mu": 0.2, "sigma": 1},
            "interval": {"a": 0.5, "b": 2},
            "payoff": {"type": "put", "strike": 1.5},
            "measure": {"density": {"pieces": [{"type": "const", "value": 2}]},
                        "atoms": [{"y": 1.2, "w": 0.5}], "convention": "semimartingale-sigma2", "eps": 0.02},
            "options": {"grid": [0.5, 1.0, 1.2, 2.0]}}"#,
    );
    let out = dir.path().join("out");
    let res = mrst(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["convention"], "semimartingale-sigma2");
}

#[test]
fn missing_output_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "solve.json", MINIMAL_SOLVE);
    let res = Command::new(env!("CARGO_BIN_EXE_mrst")).arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
}
