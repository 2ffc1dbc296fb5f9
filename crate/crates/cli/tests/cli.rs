use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wulffcap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wulffcap")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

const COARSE: &str = "[grid]\nn_radial = 32\nn_polar = 16\nn_azimuth = 32\n";

#[test]
fn verify_on_the_unit_wulff_ball_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("w1.toml");
    std::fs::write(&cfg, "p = [2.0]\nq = [2.0]\n[norm]\nfamily = \"euclidean\"\n[domain]\nshape = \"wulff\"\nradius = 1.0\n").unwrap();
    let o = wulffcap(&["verify", "--config", cfg.to_str().unwrap(), "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let r = read_report(&dir.path().join("out"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["pass"], true);
    let records = r["inequalities"][0]["records"].as_array().unwrap();
    assert!(records.len() >= 6);
    for rec in records {
        let ratio = rec["ratio"].as_f64().unwrap();
        assert!((0.98..=1.02).contains(&ratio), "{rec}");
    }
}

#[test]
fn capacity_rejects_p_equal_to_the_dimension() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "dimension = 3\np = [3.0]\n").unwrap();
    let o = wulffcap(&["capacity", "--config", "c.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("1 < p < n = 3"), "{err}");
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn identities_with_defaults_pass_and_print_the_kato_residual() {
    let dir = tempfile::tempdir().unwrap();
    let o = wulffcap(&["identities", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("max Kato residual:")).expect("residual line");
    let value: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(value < 1e-8, "{line}");
    let r = read_report(&dir.path().join("out"));
    assert_eq!(r["identities"]["sign_violations"], 0);
    assert!(r["identities"]["max_kato_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn unknown_keys_are_usage_errors_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "p = [2.0]\n\n[solver]\ndelta_fnal = 1e-6\n").unwrap();
    let o = wulffcap(&["capacity", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("c.toml") && err.contains("line 4") && err.contains("delta_fnal"), "{err}");
}

#[test]
fn command_line_errors_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wulffcap(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(wulffcap(&["identities", "--seed", "minus-one"], dir.path()).status.code(), Some(1));
    assert_eq!(wulffcap(&["identities", "--threads", "0", "--out", "o"], dir.path()).status.code(), Some(1));
    assert_eq!(wulffcap(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(wulffcap(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn failed_verdicts_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[identities]\nkato_tolerance = 0.0\nsign_samples = 100\n").unwrap();
    let o = wulffcap(&["identities", "--config", "c.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let r = read_report(&dir.path().join("out"));
    assert_eq!(r["pass"], false);
    assert_eq!(r["verdicts"][0]["pass"], false);
}

#[test]
fn verify_needs_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "dimension = 2\np = [1.5]\nq = [3.0]\n").unwrap();
    let o = wulffcap(&["verify", "--config", "c.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dimension"));
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn deterministic_reports_are_byte_identical_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "p = [1.8, 2.2]\nq = [2.0]\nchecks = [\"norm\", \"capacity\", \"phi\", \"identities\"]\n[norm]\nfamily = \"power\"\nexponent = 4.0\n[identities]\nsign_samples = 500\n{COARSE}"
    );
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let mut reports = Vec::new();
    for (out, threads) in [("a", "1"), ("b", "2")] {
        let o = wulffcap(&["all", "--config", "c.toml", "--out", out, "--seed", "9", "--threads", threads, "--deterministic"], dir.path());
        assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
        let bytes = std::fs::read(dir.path().join(out).join("report.json")).unwrap();
        reports.push(bytes);
    }
    let a: Value = serde_json::from_slice(&reports[0]).unwrap();
    let b: Value = serde_json::from_slice(&reports[1]).unwrap();
    assert_eq!(a["seed"], 9);
    assert_eq!(a["deterministic"], true);
    assert!(a["timing"]["stages"].as_array().unwrap().len() >= 4);
    let a = serde_json::to_vec_pretty(&strip_timing(a)).unwrap();
    let b = serde_json::to_vec_pretty(&strip_timing(b)).unwrap();
    assert!(a == b, "reports differ outside the timing field");
    for name in ["phi_p1.8_q2.csv", "phi_p2.2_q2.csv"] {
        let x = std::fs::read_to_string(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read_to_string(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y);
        assert!(x.starts_with("tau,phi\n"), "{x}");
        assert_eq!(x.lines().count(), 21);
    }
}

#[test]
fn sweep_writes_the_capacity_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[sweep]\np = [1.5, 2.0]\n[sweep.grid]\nn_radial = 24\nn_polar = 12\nn_azimuth = 24\n",
    )
    .unwrap();
    let o = wulffcap(&["sweep-p", "--config", "c.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("p,cap,target,ratio"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!((r[3] - r[1] / r[2]).abs() < 1e-12);
    }
    // on the unit ball Cap/|∂B| = ((n−p)/(p−1))^{p−1}: √3 at p = 1.5 and 1 at p = 2
    assert!((rows[0][3] / 3f64.sqrt() - 1.0).abs() < 0.02, "{rows:?}");
    assert!((rows[1][3] - 1.0).abs() < 0.02, "{rows:?}");
}

#[test]
fn capacity_report_carries_the_closed_form_comparison() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), format!("p = [2.0]\n[domain]\nshape = \"ball\"\nradius = 2.0\n{COARSE}")).unwrap();
    let o = wulffcap(&["capacity", "--config", "c.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = read_report(&dir.path().join("out"));
    let case = &r["capacities"][0];
    // Cap_2(B_R) = 4πR in three dimensions
    let analytic = case["analytic"].as_f64().unwrap();
    assert!((analytic - 8.0 * std::f64::consts::PI).abs() < 1e-9);
    assert!(case["relative_error"].as_f64().unwrap().abs() < 0.02);
    assert!(case["result"]["discrepancy"].as_f64().unwrap() < 0.02);
    assert_eq!(case["solve"]["converged"], true);
    assert!(r["config"].get("out").is_none());
}
