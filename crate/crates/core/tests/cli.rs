use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn grkbs() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_grkbs"));
    cmd.env_remove("GRKBS_SEED");
    cmd
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const SCALAR: &str = r#"{"mode":"train",
  "feature":{"activation":"relu","box":{"lower":[0,0],"upper":[0.5,0.5]},"input_dim":1,"output_dim":1},
  "dataset_path":"one.csv","output_dir":"out","seed":4}"#;

fn scalar_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "one.csv", "x1,y1\n1,1\n");
    write(dir.path(), "scalar.json", SCALAR);
    dir
}

#[test]
fn scalar_training_writes_artifacts() {
    let dir = scalar_dir();
    let out = grkbs()
        .arg("run")
        .arg(dir.path().join("scalar.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let base = dir.path().join("out");
    let report = read_json(&base.join("report.json"));
    assert!((report["objective"].as_f64().unwrap() - 0.75).abs() <= 1e-6);
    assert_eq!(report["seed"], 4);
    assert_eq!(report["within_bound"], true);
    let model = read_json(&base.join("model.json"));
    assert!((model["objective"].as_f64().unwrap() - 0.75).abs() <= 1e-6);
    assert_eq!(model["bound_mN"], 1);
    let metrics = fs::read_to_string(base.join("metrics.jsonl")).unwrap();
    assert!(!metrics.is_empty());
    for line in metrics.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for key in [
            "step",
            "objective",
            "atom_count",
            "certificate_sup",
            "wall_ms",
        ] {
            assert!(rec.get(key).is_some(), "{line}");
        }
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("model.json"));
}

#[test]
fn model_bytes_are_reproducible() {
    let dir = scalar_dir();
    write(
        dir.path(),
        "five.csv",
        "x1,y1\n-0.8,1.2\n-0.3,-0.4\n0.1,0.9\n0.5,-1.1\n0.9,0.3\n",
    );
    let cfg = write(
        dir.path(),
        "tanh.json",
        r#"{"mode":"train",
  "feature":{"activation":"tanh","box":{"lower":[-2,-2],"upper":[2,2]},"input_dim":1,"output_dim":1},
  "solver":{"lambda":0.05},"dataset_path":"five.csv","output_dir":"unused","seed":9}"#,
    );
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let target = dir.path().join(name);
        let out = grkbs()
            .arg("run")
            .arg(&cfg)
            .arg("--output-dir")
            .arg(&target)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        bytes.push(fs::read(target.join("model.json")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = scalar_dir();
    let cfg = dir.path().join("scalar.json");
    let out = grkbs()
        .arg("run")
        .arg(&cfg)
        .env("GRKBS_SEED", "123")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(&dir.path().join("out/report.json"))["seed"], 123);

    let out = grkbs()
        .arg("run")
        .arg(&cfg)
        .env("GRKBS_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("GRKBS_SEED"));
}

#[test]
fn unconverged_training_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "d.csv",
        "x1,y1\n-0.8,1.2\n-0.3,-0.4\n0.1,0.9\n0.5,-1.1\n0.9,0.3\n",
    );
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"mode":"train",
  "feature":{"activation":"tanh","box":{"lower":[-2,-2],"upper":[2,2]},"input_dim":1,"output_dim":1},
  "solver":{"lambda":0.01,"max_iters":1},"dataset_path":"d.csv","output_dir":"out"}"#,
    );
    let out = grkbs().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 2);
    let report = read_json(&dir.path().join("out/report.json"));
    assert_eq!(report["converged"], false);
    assert!(dir.path().join("out/model.json").exists());
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("missing.json", None),
        (
            "unknown.json",
            Some(r#"{"mode":"train","output_dir":"o","bogus":1}"#),
        ),
        (
            "nodata.json",
            Some(
                r#"{"mode":"train","feature":{"activation":"relu","box":{"lower":[0,0],"upper":[1,1]},"input_dim":1,"output_dim":1},"dataset_path":"absent.csv","output_dir":"o"}"#,
            ),
        ),
        (
            "lambda.json",
            Some(r#"{"mode":"verify_quotient","solver":{"lambda":-1},"output_dir":"o"}"#),
        ),
    ];
    for (name, text) in cases {
        if let Some(t) = text {
            write(dir.path(), name, t);
        }
        let out = grkbs()
            .arg("run")
            .arg(dir.path().join(name))
            .output()
            .unwrap();
        assert_eq!(code(&out), 1, "{name}");
        assert!(
            String::from_utf8_lossy(&out.stderr).starts_with("grkbs: "),
            "{name}"
        );
    }
    write(dir.path(), "bad.csv", "x1,y1\n0.5,oops\n");
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"mode":"train","feature":{"activation":"relu","box":{"lower":[0,0],"upper":[1,1]},"input_dim":1,"output_dim":1},"dataset_path":"bad.csv","output_dir":"o"}"#,
    );
    let out = grkbs().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn verify_checks_without_running() {
    let dir = scalar_dir();
    let out = grkbs()
        .arg("verify")
        .arg(dir.path().join("scalar.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("ok"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn convergence_mode_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "pde.json",
        r#"{"mode":"pde_convergence","pde":{"grid_points":201,"basis_count":2,"convergence_grids":[101,201]},"output_dir":"out"}"#,
    );
    let out = grkbs().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("h,max_error,ratio"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2], "");
    let ratio: f64 = rows[1][2].parse().unwrap();
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn quotient_mode_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "q.json",
        r#"{"mode":"verify_quotient","quotient":{"instances":10},"output_dir":"out","seed":3}"#,
    );
    let out = grkbs().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("out/quotient_report.json"));
    let checks = report
        .as_array()
        .or_else(|| report["checks"].as_array())
        .unwrap();
    assert!(checks.len() >= 5);
    for c in checks {
        assert_eq!(c["pass"], true, "{c}");
        assert!(c["check"].is_string() && c["max_violation"].is_number());
    }
}
