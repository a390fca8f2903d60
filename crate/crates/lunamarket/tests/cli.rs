//! The batch interface: subcommands, outputs and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lunamarket"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

#[test]
fn run_writes_all_outputs_and_verify_accepts_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(scenario("table1.scenario"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in [
        "events.jsonl",
        "metrics.json",
        "ledger.jsonl",
        "coverage.csv",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }

    let verify = bin()
        .args(["verify", "--log"])
        .arg(dir.path().join("ledger.jsonl"))
        .output()
        .unwrap();
    assert_eq!(verify.status.code(), Some(0));

    // corrupt one byte: exit code 1
    let path = dir.path().join("ledger.jsonl");
    let mut bytes = std::fs::read(&path).unwrap();
    let pos = bytes.iter().position(|&b| b == b'5').unwrap();
    bytes[pos] = b'6';
    std::fs::write(&path, bytes).unwrap();
    let verify = bin().args(["verify", "--log"]).arg(&path).output().unwrap();
    assert_eq!(verify.status.code(), Some(1));
}

#[test]
fn seed_flag_and_env_override_the_scenario() {
    let dir1 = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(scenario("table1.scenario"))
        .args(["--seed", "123", "--out"])
        .arg(dir1.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed 123"));

    let dir2 = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(scenario("table1.scenario"))
        .arg("--out")
        .arg(dir2.path())
        .env("LUNAMARKET_SEED", "456")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed 456"));

    // --seed wins over the environment
    let dir3 = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(scenario("table1.scenario"))
        .args(["--seed", "123", "--out"])
        .arg(dir3.path())
        .env("LUNAMARKET_SEED", "456")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed 123"));
}

#[test]
fn config_errors_exit_2() {
    // missing file
    let out = bin()
        .args(["run", "--scenario", "/nonexistent.scenario"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // mode=both via run is a usage error pointing at compare
    let out = bin()
        .args(["run", "--scenario"])
        .arg(scenario("reference.scenario"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("compare"));

    // invalid scenario content
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scenario");
    std::fs::write(&bad, "mode = \"coordinated\"\n").unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn grid_info_and_locate() {
    let out = bin()
        .args(["grid", "info", "--frequency", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("42 cells"));
    assert!(text.contains("12 pentagons"));

    let out = bin()
        .args([
            "grid",
            "locate",
            "--lat",
            "90",
            "--lon",
            "0",
            "--frequency",
            "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("gp2-"));

    let out = bin()
        .args(["grid", "info", "--frequency", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args([
            "grid",
            "locate",
            "--lat",
            "91",
            "--lon",
            "0",
            "--frequency",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_writes_both_modes_and_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["compare", "--scenario"])
        .arg(scenario("reference.scenario"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("comparison.json").exists());
    assert!(dir.path().join("coordinated/events.jsonl").exists());
    assert!(dir.path().join("baseline/coverage.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("comparison.json")).unwrap())
            .unwrap();
    assert!(report["distanceSavedM"].as_f64().unwrap() > 0.0);
}
