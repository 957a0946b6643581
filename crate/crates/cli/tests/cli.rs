use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nashcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nashcl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    nashcl(&args)
}

/// Writes a modified copy of a shipped config.
fn variant(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = fs::read_to_string(configs().join(name)).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let path = dir.join(format!("variant_{name}"));
    fs::write(&path, v.to_string()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_prints() {
    let o = nashcl(&["version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("nashcl "));
}

#[test]
fn usage_error_exits_one() {
    assert_eq!(nashcl(&["simulate"]).status.code(), Some(1));
    assert_eq!(nashcl(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn simulate_writes_outputs_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = configs().join("scalar_lq.json");
    for out in [&a, &b] {
        let o = run_in("simulate", &cfg, out, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let csv_a = fs::read(a.join("run.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("run.csv")).unwrap());
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    assert!(summary.contains("status: completed"));
    assert!(summary.contains("seed: 7"));

    // The CSV parses back: one header, 201 rows, every field a finite number.
    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| r.len() == header.len() && r.iter().all(|v| v.is_finite())));
    assert!((rows.last().unwrap()[0] - 20.0).abs() < 1e-12);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(dir.path(), "scalar_lq.json", |v| {
        v["simulation"]["t_final"] = 0.5.into();
    });
    let o = run_in("simulate", &cfg, dir.path(), &["--seed", "42"]);
    assert_eq!(o.status.code(), Some(0));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("seed: 42"));
}

#[test]
fn divergence_exits_two_with_snapshot() {
    let dir = TempDir::new().unwrap();
    let o = run_in("simulate", &configs().join("divergent.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical failure"));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("status: aborted"));
}

#[test]
fn non_positive_step_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(dir.path(), "scalar_lq.json", |v| {
        v["simulation"]["dt"] = (-0.001).into();
    });
    let o = run_in("simulate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dt"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_missing_file_exit_one() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(dir.path(), "scalar_lq.json", |v| {
        v["gains"]["critic"]["eta_c3"] = 1.0.into();
    });
    let o = run_in("simulate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("eta_c3"));
    let o = run_in("oracle", &dir.path().join("absent.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_gains_benchmark_passes() {
    let dir = TempDir::new().unwrap();
    let o = run_in("check-gains", &configs().join("scalar_lq.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("gain_report.txt")).unwrap();
    for k in 1..=3 {
        assert!(text.contains(&format!("player 0 condition {k}: ok")), "{text}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gain_report.json")).unwrap()).unwrap();
    assert_eq!(json["conditions_ok"], serde_json::json!([true, true, true]));
}

#[test]
fn check_gains_zeroed_actor_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(dir.path(), "scalar_lq.json", |v| {
        v["gains"]["actor"] = serde_json::json!({ "eta_a1": 0.0, "eta_a2": 0.0 });
    });
    let o = run_in("check-gains", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    let text = fs::read_to_string(dir.path().join("gain_report.txt")).unwrap();
    assert!(text.contains("condition 3: FAILED"));
}

#[test]
fn oracle_scalar_and_nonlinear() {
    let dir = TempDir::new().unwrap();
    let o = run_in("oracle", &configs().join("scalar_lq.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.4142135624"));
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert!(csv.starts_with("player,quantity,index,value\n"));

    let o = run_in("oracle", &configs().join("nonlinear.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("linear_quadratic"));
}
