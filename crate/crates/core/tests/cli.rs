//! The `finite-decoy` binary: subcommands, formats and exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_finite-decoy"))
}

#[test]
fn optimize_single_cell_as_csv() {
    let out = bin().args(["optimize", "--k", "3", "--sx", "1e7", "--format", "csv", "--restarts", "8"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = finite_decoy::cli::ScanRow::from_csv(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(row.k, 3);
    assert!((row.rate_e5 - 0.779).abs() / 0.779 < 0.05, "{}", row.rate_e5);
}

#[test]
fn rate_with_explicit_parameters_as_json() {
    let out = bin()
        .args(["rate", "--sx", "1e7", "--px", "0.8125", "--mu", "0.2185,0.1185,1e-6", "--pmu", "0.1154,0.6685,0.2161"])
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: finite_decoy::KeyRateReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.feasible && report.rate > 7e-6);
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = std::env::temp_dir().join(format!("finite-decoy-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, "{\"channel.p_dc\": \"oops\"}").unwrap();
    let out = bin().args(["scan", "--config"]).arg(&path).output().unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("channel.p_dc"));
}

#[test]
fn invalid_profile_exits_with_code_two() {
    let out = bin().args(["rate", "--sx", "1e7", "--px", "0.5", "--mu", "0.1,0.2,0", "--pmu", "0.3,0.3,0.4"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let out = bin().args(["verify", "--trials", "200", "--coverage-trials", "1000"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("PASS"));
}
