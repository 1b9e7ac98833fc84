use std::path::Path;
use std::process::{Command, Output};

fn vgex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vgex")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const PROBABILITY: &str = r#"
experiment_id = "cli-prob"
kind = "probability"
master_seed = 11

[processes.ou]
horizon = 1.0
coords = [{ type = "stationary", a = 1.0, kappa = 1.0 }, { type = "stationary", a = 1.0, kappa = 1.0 }]

[probability]
process = "ou"
replications = 4000
thresholds = [1.0, 1.0]
u_ladder = [0.5, 1.0]
grid = { step = 0.03125 }
"#;

#[test]
fn probability_run_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "p.toml", PROBABILITY);
    let out = dir.path().join("out");
    let status = vgex(&["estimate-prob", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().count() >= 4);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment_id"], "cli-prob");
    assert_eq!(manifest["master_seed"], 11);
}

#[test]
fn seed_and_workers_control_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "p.toml", PROBABILITY);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["estimate-prob", "--config", &config, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(vgex(&args).status.code(), Some(0));
        std::fs::read(out.join("results.csv")).unwrap()
    };
    let one = run("a", &["--workers", "1"]);
    let four = run("b", &["--workers", "4"]);
    let reseeded = run("c", &["--seed", "12"]);
    assert_eq!(one, four);
    assert_ne!(one, reseeded);
}

#[test]
fn json_format_is_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "p.toml", PROBABILITY);
    let out = dir.path().join("out");
    let status = vgex(&[
        "estimate-prob",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(status.status.code(), Some(0));
    let records: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap();
    assert!(records.as_array().is_some_and(|r| !r.is_empty()));
}

#[test]
fn bounds_table_needs_no_config() {
    let dir = tempfile::tempdir().unwrap();
    let status = vgex(&["bounds-table", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(0));
    assert!(dir.path().join("results.csv").exists());
}

#[test]
fn config_errors_exit_with_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        &PROBABILITY.replace("replications = 4000", "replications = \"many\""),
    );
    let status = vgex(&["estimate-prob", "--config", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&status.stderr).contains("probability.replications"));

    let good = write(dir.path(), "p.toml", PROBABILITY);
    let wrong_kind = vgex(&["audit", "--config", &good, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(wrong_kind.status.code(), Some(1));

    let missing = vgex(&["compare", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn failed_preconditions_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "a.toml",
        r#"
experiment_id = "reversed-slepian"
kind = "audit"
master_seed = 1

[processes.slow]
horizon = 1.0
coords = [{ type = "stationary", a = 1.0, kappa = 1.0 }]

[processes.fast]
horizon = 1.0
coords = [{ type = "stationary", a = 2.0, kappa = 1.0 }]

[audit]
test = "slepian"
process = "fast"
process_b = "slow"
thresholds = [2.0]
replications = 2000
grid = { step = 0.0625 }
"#,
    );
    let status = vgex(&[
        "audit",
        "--config",
        &config,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        status.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&status.stdout)
    );
}
