use std::process::Command;

use etlpv::cli::{bundled_config, emit_config};

fn etlpv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_etlpv"))
}

#[test]
fn infeasible_example_exits_one_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = etlpv().args(["reproduce", "--example", "1", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[FAIL] stabilization"));
    assert!(text.contains("PASS printed-psi-positive-definite"));
    assert!(dir.path().join("example1.report.json").exists());
    assert!(!dir.path().join("example1.csv").exists());
}

#[test]
fn malformed_config_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"name\": \"x\",\n  oops\n}\n").unwrap();
    let out = etlpv().args(["synthesize", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn unknown_example_exits_two() {
    let out = etlpv().args(["reproduce", "--example", "4"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tracking_run_honours_env_out_dir_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sine.json");
    std::fs::write(&cfg_path, emit_config(&bundled_config("2a").unwrap())).unwrap();
    let out_dir = dir.path().join("env-out");
    let out = etlpv()
        .args(["track", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "1"])
        .env("ETLPV_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(out_dir.join("example2_sine.csv")).unwrap();
    assert!(csv.starts_with("k,x1,x2,u1,p1,w1,w2,triggered,V\n"));
    assert_eq!(csv.lines().count(), 1 + 601);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("example2_sine.report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 1);
    assert!(report["stages"].as_array().unwrap().iter().all(|s| s["status"] == "passed"));
}
