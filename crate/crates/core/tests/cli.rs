mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::scenario_dir;

fn tool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-harvest"))
        .args(args)
        .env("LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn run(sub: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    tool(&args)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn scalar() -> std::path::PathBuf {
    scenario_dir().join("scalar.json")
}

#[test]
fn risk_reports_hand_value() {
    let out = tempfile::tempdir().unwrap();
    let o = run("risk", &scalar(), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.path().join("risk.json"));
    let rho = report["total_risk"].as_f64().unwrap();
    assert!((rho + 0.090323).abs() < 1e-6);
    assert!(report["allocation_identity_residual"].as_f64().unwrap().abs() < 1e-12);
    let prov = &report["provenance"];
    assert_eq!(prov["seed"], 20240611);
    assert_eq!(prov["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(prov["scenario"]["economics"]["r"], 0.1);
}

#[test]
fn numbers_have_seventeen_significant_digits() {
    let out = tempfile::tempdir().unwrap();
    run("risk", &scalar(), out.path(), &[]);
    let text = std::fs::read_to_string(out.path().join("risk.json")).unwrap();
    assert!(text.contains("\"total_risk\": -9.0322849314229223e-2"), "{text}");
}

#[test]
fn no_aversion_flag_returns_expected_loss() {
    let out = tempfile::tempdir().unwrap();
    run("risk", &scalar(), out.path(), &["--no-aversion"]);
    let report = read_json(&out.path().join("risk.json"));
    assert_eq!(report["total_risk"], report["expected_loss_at_barycenter"]);
    assert_eq!(report["provenance"]["no_aversion"], true);
}

#[test]
fn simulate_writes_one_plus_two_n_columns() {
    let out = tempfile::tempdir().unwrap();
    let o = run("simulate", &scenario_dir().join("symmetric_pair.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,k_1,k_2,c_1,c_2"));
    assert!(lines.all(|l| l.split(',').count() == 5));
}

#[test]
fn verify_passes_on_bundled_scenarios() {
    for name in ["scalar", "symmetric_pair", "three_region_path"] {
        let out = tempfile::tempdir().unwrap();
        let o = run("verify", &scenario_dir().join(format!("{name}.json")), out.path(), &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let reports = read_json(&out.path().join("verify.json"));
        for r in reports.as_array().unwrap() {
            let ok = r["passed"].as_bool().unwrap() || r["diagnostic_only"].as_bool().unwrap();
            assert!(ok, "{name}: {r}");
        }
        assert!(out.path().join("provenance.json").exists());
    }
}

#[test]
fn failing_oracle_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let o = run("verify", &scalar(), out.path(), &["--tolerance", "terminal=1e-300", "--tolerance", "rk4=1e-300"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(tool(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(tool(&["risk"]).status.code(), Some(64));
    let out = tempfile::tempdir().unwrap();
    let bad_tol = run("risk", &scalar(), out.path(), &["--tolerance", "nope=1"]);
    assert_eq!(bad_tol.status.code(), Some(64));
    let bad_variant = run("risk", &scalar(), out.path(), &["--variant", "other"]);
    assert_eq!(bad_variant.status.code(), Some(64));
    assert_eq!(tool(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_scenarios_exit_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scalar()).unwrap();
    let cases = [
        (text.replace("\"beta\": 0.5, ", ""), "economics.beta"),
        (text.replace("\"weight\": 1.0", "\"weight\": 0.9"), "priors.weights"),
    ];
    for (i, (body, field)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.json"));
        std::fs::write(&path, body).unwrap();
        let o = run("risk", &path, dir.path(), &[]);
        assert_eq!(o.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&o.stderr).contains(field));
    }
    let missing = run("risk", &dir.path().join("absent.json"), dir.path(), &[]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sampling_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scalar()).unwrap().replace("\"seed\": 20240611,", "");
    let path = dir.path().join("noseed.json");
    std::fs::write(&path, text).unwrap();
    assert_eq!(run("robust", &path, dir.path(), &[]).status.code(), Some(2));
    assert_eq!(run("risk", &path, dir.path(), &[]).status.code(), Some(0));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        for sub in ["robust", "simulate", "verify"] {
            assert_eq!(run(sub, &scenario_dir().join("three_region_path.json"), dir.path(), &[]).status.code(), Some(0));
        }
    }
    for name in ["robust.json", "robust_policy.csv", "simulate.json", "trajectory.csv", "verify.json", "provenance.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn foc_variant_is_recorded() {
    let out = tempfile::tempdir().unwrap();
    run("solve", &scalar(), out.path(), &["--variant", "foc"]);
    let report = read_json(&out.path().join("solve.json"));
    assert_eq!(report["provenance"]["rate_variant"], "foc");
    assert!((report["theta"].as_f64().unwrap() - 0.15).abs() < 1e-15);
}
