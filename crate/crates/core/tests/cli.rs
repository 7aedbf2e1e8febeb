use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bvfilter::fixtures;
use bvfilter::io::{Table, SCHEMA_LINE};
use bvfilter::scenario::{ObservationSpec, ScenarioSpec};
use tempfile::TempDir;

fn bvfilter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvfilter"))
        .args(args)
        .env_remove("BVFILTER_OUT")
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, spec: &ScenarioSpec) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, spec.to_json()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_one_path_writes_one_csv() {
    let tmp = TempDir::new().unwrap();
    let sc = write_spec(tmp.path(), "ou.json", &fixtures::ou(100));
    let out = tmp.path().join("out");
    let o = bvfilter(&["simulate", s(&sc), "--paths", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files_in(&out), vec!["path_0000.csv", "summary.json"]);
    let text = std::fs::read_to_string(out.join("path_0000.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(SCHEMA_LINE));
    let table = Table::from_csv(&text).unwrap();
    assert_eq!(table.rows.len(), 101);
    assert_eq!(table.header, vec!["t", "x_1", "y_1", "log_eta"]);
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let sc = write_spec(tmp.path(), "ou.json", &fixtures::ou(100));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let o = bvfilter(&[
            "simulate",
            s(&sc),
            "--paths",
            "5",
            "--seed",
            "42",
            "--jobs",
            jobs,
            "--out",
            s(dir),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(files_in(&a).len(), 6);
    for name in files_in(&a) {
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn output_directory_defaults_to_env() {
    let tmp = TempDir::new().unwrap();
    let sc = write_spec(tmp.path(), "ou.json", &fixtures::ou(50));
    let out = tmp.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_bvfilter"))
        .args(["simulate", s(&sc)])
        .env("BVFILTER_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("summary.json").exists());
}

#[test]
fn missing_scenario_exits_2() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = bvfilter(&["simulate", s(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn invalid_scenario_prints_violations() {
    let tmp = TempDir::new().unwrap();
    let mut spec = fixtures::linear_with_jumps(101, 100);
    spec.fuel_k = 0.5;
    let sc = write_spec(tmp.path(), "bad.json", &spec);
    let o = bvfilter(&["simulate", s(&sc), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fuel"), "{}", stderr(&o));
}

#[test]
fn kalman_rejects_nonlinear_scenario() {
    let tmp = TempDir::new().unwrap();
    let sc = write_spec(
        tmp.path(),
        "nl.json",
        &fixtures::nonlinear_with_jumps(61, 100),
    );
    let o = bvfilter(&[
        "filter",
        s(&sc),
        "--method",
        "kalman",
        "--generate",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("oracle requires linear-Gaussian"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn particle_output_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let sc = write_spec(
        tmp.path(),
        "lin.json",
        &fixtures::linear_with_jumps(101, 100),
    );
    let mut runs = Vec::new();
    for dir in ["a", "b"] {
        let out = tmp.path().join(dir);
        let o = bvfilter(&[
            "filter",
            s(&sc),
            "--method",
            "particle",
            "--generate",
            "--particles",
            "100",
            "--seed",
            "3",
            "--dump-particles",
            "50",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(out);
    }
    for name in ["estimate_particle.csv", "particles.csv", "observation.csv"] {
        assert_eq!(
            std::fs::read(runs[0].join(name)).unwrap(),
            std::fs::read(runs[1].join(name)).unwrap(),
            "{name}"
        );
    }
    let dump = Table::read(&runs[0].join("particles.csv")).unwrap();
    assert_eq!(dump.rows.len(), 300);
}

#[test]
fn unobserved_zakai_keeps_unit_mass() {
    let tmp = TempDir::new().unwrap();
    let mut spec = fixtures::linear_with_jumps(201, 200);
    spec.coeffs.h = ObservationSpec::Zero;
    let sc = write_spec(tmp.path(), "flat.json", &spec);
    let o = bvfilter(&[
        "filter",
        s(&sc),
        "--method",
        "zakai",
        "--generate",
        "--snapshots-every",
        "100",
        "--out",
        s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = Table::read(&tmp.path().join("estimate_zakai.csv")).unwrap();
    let log_mass = table.column("log_mass").unwrap();
    assert!(log_mass.iter().all(|v| v.abs() < 1e-6), "{log_mass:?}");
    let snaps: Vec<String> = files_in(tmp.path())
        .into_iter()
        .filter(|n| n.starts_with("snapshot_zakai_"))
        .collect();
    assert_eq!(snaps.len(), 3);
}

#[test]
fn ks_and_zakai_agree_through_compare() {
    let tmp = TempDir::new().unwrap();
    let sc = write_spec(
        tmp.path(),
        "nl.json",
        &fixtures::nonlinear_with_jumps(121, 200),
    );
    let out = tmp.path();
    let o = bvfilter(&[
        "filter",
        s(&sc),
        "--method",
        "zakai",
        "--generate",
        "--out",
        s(out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let obs = out.join("observation.csv");
    let o = bvfilter(&[
        "filter",
        s(&sc),
        "--method",
        "ks",
        "--obs",
        s(&obs),
        "--out",
        s(out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bvfilter(&[
        "compare",
        s(&out.join("estimate_zakai.csv")),
        s(&out.join("estimate_ks.csv")),
        "--max-sup-mean",
        "1e-12",
        "--max-sup-cov",
        "1e-12",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn compare_file_with_itself_and_with_a_shift() {
    let tmp = TempDir::new().unwrap();
    let sc = write_spec(
        tmp.path(),
        "lin.json",
        &fixtures::linear_with_jumps(101, 100),
    );
    let o = bvfilter(&[
        "filter",
        s(&sc),
        "--method",
        "kalman",
        "--generate",
        "--out",
        s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = tmp.path().join("estimate_kalman.csv");
    let report = tmp.path().join("self.json");
    let o = bvfilter(&["compare", s(&a), s(&a), "--report", s(&report)]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in [
        "rmse_mean",
        "sup_mean_error",
        "sup_cov_error",
        "sup_log_mass_error",
    ] {
        assert_eq!(v[key].as_f64(), Some(0.0), "{key}");
    }

    let mut shifted = Table::read(&a).unwrap();
    let col = shifted.index("mean_1").unwrap();
    for row in &mut shifted.rows {
        row[col] += 0.25;
    }
    let b = tmp.path().join("shifted.csv");
    shifted.write(&b).unwrap();
    let o = bvfilter(&["compare", s(&a), s(&b), "--max-rmse-mean", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["rmse_mean"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(v["pass"], serde_json::Value::Bool(false));
}

#[test]
fn compare_grid_mismatch_exits_3() {
    let tmp = TempDir::new().unwrap();
    for (name, steps) in [("a", 100), ("b", 50)] {
        let sc = write_spec(tmp.path(), &format!("{name}.json"), &fixtures::ou(steps));
        let out = tmp.path().join(name);
        let o = bvfilter(&[
            "filter",
            s(&sc),
            "--method",
            "kalman",
            "--generate",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = bvfilter(&[
        "compare",
        s(&tmp.path().join("a/estimate_kalman.csv")),
        s(&tmp.path().join("b/estimate_kalman.csv")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn mollify_checks_pass() {
    let o = bvfilter(&["checks", "--suite", "mollify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v.is_empty());
    assert!(v.iter().all(|c| c["pass"] == serde_json::Value::Bool(true)));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = bvfilter(&["checks", "--suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
