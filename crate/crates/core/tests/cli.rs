use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dbco::harness::{ExperimentConfig, CSV_HEADER};

const SMALL: &str = r#"
algorithm = "one_point"
rounds = 150
ensemble = 3
seed = 4

[schedule]
theta1 = 0.8333333333333334

[adversary]
learners = 4
constraints = 2
dims = [2, 3, 2, 1]
half_width = 3.0
set = "ball"

[graph]
rho = 0.4
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path
}

fn dbco(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbco"))
        .arg(args[0])
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .args(&args[1..])
        .output()
        .unwrap()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = dbco(&["run"], &config, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 150);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["members"].as_array().unwrap().len(), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Reg/T="));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(dbco(&["run", "--ensemble", "2"], &config, &a)
        .status
        .success());
    assert!(
        dbco(&["run", "--ensemble", "2", "--parallel", "3"], &config, &b)
            .status
            .success()
    );
    assert!(
        dbco(&["run", "--ensemble", "2", "--seed", "5"], &config, &c)
            .status
            .success()
    );
    let read = |d: &Path| fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 5);
    assert_eq!(summary["members"].as_array().unwrap().len(), 2);
}

#[test]
fn check_bounds_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = dbco(&["check-bounds"], &config, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("corollary1:"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(report["form"], "corollary1");
    assert_eq!(report["check"]["members"], 3);
}

#[test]
fn solve_offline_writes_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = dbco(&["solve-offline", "--ensemble", "2"], &config, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let members: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("offline.json")).unwrap()).unwrap();
    let members = members.as_array().unwrap();
    assert_eq!(members.len(), 2);
    for m in members {
        assert_eq!(m["kind"], "static");
        assert_eq!(m["decision"].as_array().unwrap().len(), 4);
        assert!(
            m["certificates"][0]["normalized_violation"]
                .as_f64()
                .unwrap()
                <= 1e-4
        );
    }
}

#[test]
fn validate_passes_on_generated_problems() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = dbco(&["validate"], &config, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("validation.json").exists());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout)
            .matches(": graph ok constants ok")
            .count(),
        3
    );
}

#[test]
fn invalid_configs_exit_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for body in [
        SMALL.replace("rounds = 150", "rounds = 0"),
        SMALL.replace("rho = 0.4", "rho = 1.5"),
        SMALL.replace("seed = 4", "seed = 4\nunknown_key = 1"),
        SMALL.replace("theta1 = 0.8333333333333334", "kappa = 0.5"),
    ] {
        let config = write_config(dir.path(), &body);
        let o = dbco(&["run"], &config, &out);
        assert!(!o.status.success(), "accepted:\n{body}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    let o = dbco(&["run"], &dir.path().join("missing.toml"), &out);
    assert!(!o.status.success());
    assert!(!out.join("metrics.csv").exists());
}

#[test]
fn zero_parallelism_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let o = dbco(
        &["run", "--parallel", "0"],
        &config,
        &dir.path().join("out"),
    );
    assert!(!o.status.success());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap();
            let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(cfg, again);
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
