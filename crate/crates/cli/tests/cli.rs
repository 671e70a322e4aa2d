use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use brownlab::grid::GridField;
use brownlab::lab::{strip_timestamp, ExperimentRecord};

fn brownlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brownlab")).args(args).output().expect("binary runs")
}

fn records(dir: &Path) -> Vec<ExperimentRecord> {
    fs::read_to_string(dir.join("records.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn stripped(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("records.jsonl")).unwrap().lines().map(strip_timestamp).collect()
}

#[test]
fn dirichlet_row_for_given_order_and_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = brownlab(&["verify-dirichlet", "--m", "3", "--t", "2", "--cases", "1", "--samples", "50000", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("dirichlet.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1].split(';').count(), 3);
    assert_eq!(row[2], "2");
    let recs = records(dir.path());
    assert_eq!(recs[0].config["params"]["m"], 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn constants_report_kappa_theta_rho_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = brownlab(&["constants", "--d", "1", "--q", "2", "--gamma", "1", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("constants.json")).unwrap()).unwrap();
    assert!(json["kappa"].as_f64().unwrap() > 0.0);
    assert!((json["theta"].as_f64().unwrap() - 1.5).abs() < 1e-3);
    let rho = &json["rho"][0];
    assert_eq!(rho["gamma"].as_f64().unwrap(), 1.0);
    assert!(rho["scalar_abs_error"].as_f64().unwrap() < 1e-10);
    let m = &records(dir.path())[0].metrics;
    assert!(m["theta_rel_error"].pass.unwrap());
}

#[test]
fn reruns_are_identical_apart_from_timestamps() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path, w: &str| {
        vec![
            "simulate".to_string(),
            "--replicas".into(),
            "40".into(),
            "--seed".into(),
            "17".into(),
            "--workers".into(),
            w.into(),
            "--out".into(),
            d.to_str().unwrap().into(),
        ]
    };
    let run = |v: Vec<String>| brownlab(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(run(args(a.path(), "1")).status.success());
    assert!(run(args(b.path(), "3")).status.success());
    assert_eq!(stripped(a.path()), stripped(b.path()));
    assert_eq!(
        fs::read(a.path().join("simulate.csv")).unwrap(),
        fs::read(b.path().join("simulate.csv")).unwrap()
    );
}

#[test]
fn config_file_then_overrides_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lab.toml");
    fs::write(&cfg, "seed = 9\n[simulate]\nreplicas = 10\nt = 0.5\ndt = 0.01\n").unwrap();
    let out = dir.path().join("o");
    let o = brownlab(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--override",
        "simulate.replicas=12",
        "--override",
        "simulate.eps=0.02",
        "--t",
        "0.25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &records(&out)[0];
    assert_eq!(r.config["seed"], 9);
    assert_eq!(r.config["params"]["replicas"], 12);
    assert_eq!(r.config["params"]["t"], 0.25);
    assert_eq!(r.config["params"]["eps"], 0.02);
    assert_eq!(fs::read_to_string(out.join("simulate.csv")).unwrap().lines().count(), 13);
}

#[test]
fn gn_solve_writes_a_readable_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = brownlab(&["gn-solve", "--q", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let f = GridField::read_binary(fs::File::open(dir.path().join("gn_profile.bin")).unwrap()).unwrap();
    assert_eq!(f.spec.d, 1);
    let r = &records(dir.path())[0];
    assert_eq!(r.artifacts, vec!["gn_profile.csv".to_string(), "gn_profile.bin".to_string()]);
    assert!(r.metrics["kappa"].value > 0.0);
}

#[test]
fn failed_checks_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = brownlab(&[
        "verify-dirichlet",
        "--cases",
        "2",
        "--samples",
        "1000",
        "--override",
        "dirichlet.z_tolerance=0.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(brownlab(&["no-such-suite"]).status.code(), Some(2));
    assert_eq!(brownlab(&["simulate", "--replicas", "many"]).status.code(), Some(2));
    assert_eq!(brownlab(&[]).status.code(), Some(2));
    assert_eq!(brownlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(brownlab(&["simulate", "--override", "simulate.dtt=3", "--out", out]).status.code(), Some(3));
    assert_eq!(brownlab(&["simulate", "--override", "no-equals-sign", "--out", out]).status.code(), Some(3));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[simulate\n").unwrap();
    assert_eq!(brownlab(&["simulate", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(3));
    assert_eq!(brownlab(&["gibbs", "--gamma", "5.0", "--out", out]).status.code(), Some(3));
}

#[test]
fn module_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = brownlab(&["gn-solve", "--d", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension 4"));
}

#[test]
fn io_errors_exit_with_five() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    assert_eq!(brownlab(&["simulate", "--config", missing.to_str().unwrap()]).status.code(), Some(5));
    // the output path is an existing file
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let o = brownlab(&["metric-suite", "--triples", "2", "--override", "metric.separations=[1, 2]", "--out", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
}
