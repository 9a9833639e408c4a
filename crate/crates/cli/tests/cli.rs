use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn acim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    names.sort();
    names
}

const SMALL_NEUTRAL: &str = r#"{
    "map": {"example_id": "neutral1d", "gamma": 2.0},
    "seed": 11,
    "transfer": {"resolution": 64, "samples_per_cell": 32, "tol": 1e-10, "max_iter": 100000, "n_levels": 500}
}"#;

#[test]
fn missing_seed_is_a_validation_error_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"map": {"example_id": 4, "component": 2}, "induction": {"n_max": 2000, "n_samples": 1000}}"#,
    );
    let out = tmp.path().join("out");
    let o = acim(&["classify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(listing(&out), vec!["errors.json"]);
    let errors = read_json(&out.join("errors.json"));
    assert_eq!(errors["errors"][0]["kind"], "validation");
    assert!(errors["errors"][0]["message"].as_str().unwrap().contains("seed"));
}

#[test]
fn seed_flag_supplies_a_missing_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"map": {"example_id": 1}, "asymptotics": {"orbit_length": 2000}}"#,
    );
    let out = tmp.path().join("out");
    let o = acim(&["asymptotics", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&out.join("asymptotics.json"))["seed"], 5);
}

#[test]
fn missing_block_and_unsupported_map_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"map": {"example_id": 1}, "seed": 1}"#);
    let out = tmp.path().join("a");
    assert_eq!(acim(&["density", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"map": {"example_id": 2}, "seed": 1, "asymptotics": {"orbit_length": 2000}}"#,
    );
    let out = tmp.path().join("b");
    assert_eq!(acim(&["asymptotics", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "e.json", r#"{"map": {"example_id": 9}, "seed": 1}"#);
    let out = tmp.path().join("c");
    assert_eq!(acim(&["audit", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"map": {"example_id": "neutral1d"}, "seed": 1,
            "transfer": {"resolution": 64, "samples_per_cell": 32, "tol": 1e-15, "max_iter": 2}}"#,
    );
    let out = tmp.path().join("out");
    let o = acim(&["density", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(read_json(&out.join("errors.json"))["errors"][0]["kind"], "numerical");
    assert!(!out.join("density.csv").exists());
}

#[test]
fn classify_example4_outer_component_is_sigma_finite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"map": {"example_id": 4, "component": 2}, "seed": 3,
            "induction": {"n_max": 2000, "n_samples": 300000}}"#,
    );
    let out = tmp.path().join("out");
    let o = acim(&["classify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let c = read_json(&out.join("classification.json"));
    assert_eq!(c["verdict"], "SigmaFinite");
    assert_eq!(c["seed"], 3);
    assert_eq!(c["config_hash"].as_str().unwrap().len(), 64);
    let tails = std::fs::read_to_string(out.join("tails.csv")).unwrap();
    let mut lines = tails.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "# seed=3");
    assert_eq!(lines.next().unwrap(), "n,level_volume,tail_volume,stderr");
    assert_eq!(lines.count(), 2000);
}

#[test]
fn asymptotics_on_example1_reports_both_decay_exponents() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"map": {"example_id": 1}, "seed": 1, "asymptotics": {"orbit_length": 10000, "fit_window": [1000, 10000]}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(acim(&["asymptotics", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let a = read_json(&out.join("asymptotics.json"));
    let claims = a["claims"].as_array().unwrap();
    let fitted = |name: &str| {
        claims
            .iter()
            .find(|c| c["claim"].as_str().unwrap().starts_with(name))
            .map(|c| c["fitted"].as_f64().unwrap())
            .unwrap()
    };
    assert!((fitted("x-axis determinant") + 2.5).abs() < 0.1);
    assert!((fitted("y-axis determinant") + 1.75).abs() < 0.1);
    assert_eq!(a["pass"], true);
}

#[test]
fn identical_config_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL_NEUTRAL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_eq!(acim(&["density", "--config", &cfg, "--out", dir.to_str().unwrap()]).status.code(), Some(0));
    }
    let names = listing(&a);
    assert_eq!(names, vec!["density.csv", "density.json", "errors.json", "transfer.csv"]);
    for n in &names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n}");
    }
    // the seed flag changes the stamp
    let c = tmp.path().join("c");
    acim(&["density", "--config", &cfg, "--seed", "12", "--out", c.to_str().unwrap()]);
    let (ja, jc) = (read_json(&a.join("density.json")), read_json(&c.join("density.json")));
    assert_ne!(ja["config_hash"], jc["config_hash"]);
    assert_eq!(jc["transfer"]["seed"], 12);
}

#[test]
fn tiny_replication_budget_fails_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = acim(&["replicate-paper", "--budget", "tiny", "--out", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion ")).count(), 9);
    }
    let s = read_json(&a.join("summary.json"));
    assert_eq!(s["pass"], false);
    assert_eq!(s["rows"].as_array().unwrap().len(), 9);
    for n in ["summary.json", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap());
    }
}
