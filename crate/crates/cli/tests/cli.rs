//! End-to-end tests of the `odma` binary: argument handling, config
//! loading, CSV emission, determinism, and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn odma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_odma"))
}

/// A small but structurally valid system: 4 chunks of 100 uses each,
/// 85-bit messages split 2+7+8+68.
const MINI_CONFIG: &str = r#"{
    "total_channel_uses": 400,
    "chunk_count": 4,
    "chunk_bits": 2,
    "pilot_bits": 7,
    "pattern_bits": 8,
    "payload_bits": 68,
    "message_bits": 85,
    "pilot_length": 25,
    "antenna_count": 32,
    "active_users": 5,
    "energy_per_bit_db": 6.0,
    "power_allocation_ratio": 0.2
}"#;

fn write_mini_config(dir: &Path) -> PathBuf {
    let path = dir.join("mini.json");
    std::fs::write(&path, MINI_CONFIG).unwrap();
    path
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

#[test]
fn run_factor_noiseless_produces_perfect_recovery_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mini_config(dir.path());
    let out = dir.path().join("factor.csv");
    let status = odma()
        .args(["run-factor", "--config"])
        .arg(&config)
        .args(["--seed", "7", "--sweep", "active_users=5", "--trials", "2"])
        .arg("--out")
        .arg(&out)
        .args(["--workers", "1", "--noiseless", "--distinct-pilots"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "m,t,ka,snr_db,support_recovery_rate,relative_frame_error"
    );
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "32"); // antennas
    assert_eq!(fields[1], "100"); // chunk length
    assert_eq!(fields[2], "5"); // users
    assert_eq!(fields[3], "inf"); // noiseless
    assert_eq!(fields[4], "1"); // perfect recovery
}

#[test]
fn run_ser_emits_paired_rows_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mini_config(dir.path());
    let out_a = dir.path().join("ser_a.csv");
    let out_b = dir.path().join("ser_b.csv");
    for out in [&out_a, &out_b] {
        let status = odma()
            .args(["run-ser", "--config"])
            .arg(&config)
            .args([
                "--seed",
                "3",
                "--sweep",
                "detector_snr=0,10",
                "--trials",
                "40",
            ])
            .arg("--out")
            .arg(out)
            .args(["--workers", "2"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read_to_string(&out_a).unwrap();
    let b = std::fs::read_to_string(&out_b).unwrap();
    assert_eq!(a, b, "same seed must give bit-identical CSV");
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "m,ka,snr_db,detector,trials,ser");
    assert_eq!(lines.len(), 5, "two sweep points × two detectors");
    assert!(lines[1].contains(",amp,"));
    assert!(lines[2].contains(",mmse,"));
}

#[test]
fn run_pupe_works_with_config_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mini_config(dir.path());
    let out = dir.path().join("pupe.csv");
    // no --seed: falls back to the config's seed field (default 0)
    let status = odma()
        .args(["run-pupe", "--config"])
        .arg(&config)
        .args(["--sweep", "ebn0=6", "--trials", "2"])
        .arg("--out")
        .arg(&out)
        .args(["--workers", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "sweep_value,trials,p_md,p_fa,pupe,p_md_lo,p_md_hi,p_fa_lo,p_fa_hi,avg_sic_rounds,cmul,cadd"
    );
    assert_eq!(lines.len(), 2);
    // every numeric field uses '.' decimal / plain integers, never a comma
    assert_eq!(lines[1].split(',').count(), 12);
}

#[test]
fn shipped_default_config_loads_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ser.csv");
    let status = odma()
        .args(["run-ser", "--config"])
        .arg(shipped_config())
        .args(["--seed", "1", "--sweep", "snr=5", "--trials", "2"])
        .arg("--out")
        .arg(&out)
        .args(["--workers", "1", "--snr", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mini_config(dir.path());
    let out = dir.path().join("never.csv");

    // missing config file
    let status = odma()
        .args(["run-pupe", "--config", "/nonexistent.json"])
        .args(["--sweep", "ebn0=0", "--trials", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(!status.success());

    // unknown sweep axis
    let status = odma()
        .args(["run-pupe", "--config"])
        .arg(&config)
        .args(["--sweep", "bogus=1", "--trials", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(!status.success());

    // detector_snr axis is rejected outside the detector benchmark
    let status = odma()
        .args(["run-pupe", "--config"])
        .arg(&config)
        .args(["--sweep", "detector_snr=1", "--trials", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(!status.success());

    // malformed sweep value
    let status = odma()
        .args(["run-ser", "--config"])
        .arg(&config)
        .args(["--sweep", "snr=abc", "--trials", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(!status.success());

    assert!(!out.exists(), "failed runs must not leave output files");
}
