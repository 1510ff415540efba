use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dmaflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmaflow"))
        .args(args)
        .output()
        .unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = dmaflow(&["bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("usage: dmaflow"));
}

#[test]
fn help_exits_cleanly() {
    let o = dmaflow(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("compare"));
}

#[test]
fn missing_config_is_a_runtime_error() {
    let o = dmaflow(&["run", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "net.widow = 15\n").unwrap();
    let o = dmaflow(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("net.widow"), "{}", stderr(&o));
}

#[test]
fn empty_correlation_set_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strict.cfg");
    let text = "scenario.months = 0.2\nsplit.train_months = 0.1\nsplit.val_months = 0.05\n\
                split.test_months = 0.05\nexperiment.mode = correlated\nexperiment.theta = 1.0\n";
    fs::write(&path, text).unwrap();
    let o = dmaflow(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).to_lowercase().contains("correlat"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn correlate_finds_zones_1_3_4() {
    let o = dmaflow(&[
        "correlate",
        "--config",
        config("default.cfg").to_str().unwrap(),
        "--theta",
        "0.95",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.trim() == "5: {1,3,4}"), "{text}");
}

#[test]
fn generate_with_seed_changes_the_panel() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg = config("smoke.cfg");
    let cfg = cfg.to_str().unwrap();
    assert!(
        dmaflow(&["generate", "--config", cfg, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    assert!(dmaflow(&[
        "generate",
        "--config",
        cfg,
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    let (a, b) = (
        fs::read_to_string(a).unwrap(),
        fs::read_to_string(b).unwrap(),
    );
    assert_eq!(a.lines().next(), Some("timestamp,1,2,3,4,5"));
    assert_eq!(a.lines().count(), b.lines().count());
    assert_ne!(a, b);
}
