//! Command-line contract: exit codes (0 success, 1 usage, 2 data), artifact
//! layout, and numeric flag parsing.

use std::path::Path;
use std::process::{Command, Output};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowguard"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn CLI")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

/// Small fixture: 10 benign clients overlaid with 3 slow-header attackers,
/// 120 s. Returns the tempdir holding `m.pcap` and its label sidecar.
fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let synth = run_in(
        dir.path(),
        &["synth", "--tool", "benign", "--clients", "10", "--duration", "120", "--out", "b.pcap"],
    );
    assert_eq!(code(&synth), 0, "{}", String::from_utf8_lossy(&synth.stderr));
    let merge = run_in(
        dir.path(),
        &["synth", "--tool", "slowloris", "--clients", "3", "--duration", "120", "--benign", "b.pcap", "--out", "m.pcap"],
    );
    assert_eq!(code(&merge), 0, "{}", String::from_utf8_lossy(&merge.stderr));
    dir
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"][..], &["eval", "--help"][..]] {
        let out = run_in(dir.path(), args);
        assert_eq!(code(&out), 0, "{args:?}");
        assert!(!out.stdout.is_empty(), "{args:?} printed nothing");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = fixture();
    let cases: &[&[&str]] = &[
        &["--definitely-not-a-flag"],
        &["frobnicate"],
        // eval needs either a config file or a scheme + threshold
        &["eval", "--trace", "m.pcap"],
        // the conjunction scheme needs both thresholds
        &["eval", "--trace", "m.pcap", "--scheme", "lpr-pdu", "--threshold", "0.1"],
        // mutually exclusive handshake policies
        &["eval", "--trace", "m.pcap", "--scheme", "lpr", "--threshold", "0.1", "--handshake", "--no-handshake"],
        // at least one strike is required
        &["eval", "--trace", "m.pcap", "--scheme", "lpr", "--threshold", "0.1", "--strikes", "0"],
        &["synth", "--tool", "no-such-tool", "--out", "x.pcap"],
        // synthesis needs a tool or a profile
        &["synth", "--out", "x.pcap"],
    ];
    for args in cases {
        let out = run_in(dir.path(), args);
        assert_eq!(code(&out), 1, "{args:?}: stderr {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty(), "{args:?} gave no diagnostic");
    }
}

#[test]
fn data_errors_exit_two() {
    let dir = fixture();
    std::fs::write(dir.path().join("broken.json"), b"{not json").unwrap();
    std::fs::write(dir.path().join("empty.json"), b"41").unwrap();
    let cases: &[&[&str]] = &[
        &["eval", "--trace", "no-such-file.pcap", "--scheme", "lpr", "--threshold", "0.1"],
        &["simulate", "--trace", "m.pcap", "--config", "broken.json"],
        &["eval", "--trace", "m.pcap", "--config", "empty.json"],
        // relabelling with a block that matches nobody leaves one class empty
        &["eval", "--trace", "m.pcap", "--scheme", "lpr", "--threshold", "0.1", "--attacker-block", "10.99.0.0/16"],
        // the benign trace itself is a valid pcap, its sidecar has no attackers
        &["train", "--trace", "b.pcap", "--scheme", "lpr"],
    ];
    for args in cases {
        let out = run_in(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}: stderr {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty(), "{args:?} gave no diagnostic");
    }
}

#[test]
fn synth_writes_capture_and_label_sidecar() {
    let dir = fixture();
    let pcap = std::fs::read(dir.path().join("m.pcap")).unwrap();
    assert_eq!(&pcap[..4], &[0xd4, 0xc3, 0xb2, 0xa1], "classic little-endian microsecond capture");

    let labels: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.pcap.labels.json")).unwrap()).unwrap();
    assert_eq!(labels["attacker_ips"].as_array().unwrap().len(), 3);
    assert_eq!(labels["tool"], "slowloris");
    assert!(labels["target_ip"].is_string());
    assert!(labels["target_port"].is_u64());
}

#[test]
fn thresholds_accept_scientific_notation() {
    let dir = fixture();
    // The slowest attacker pull rate in the fixture is 8 packets / 105 s
    // ≈ 7.62e-2 Hz, so these two thresholds straddle every attacker.
    let tp_of = |threshold: &str| -> u64 {
        let out = run_in(
            dir.path(),
            &["eval", "--trace", "m.pcap", "--scheme", "lpr", "--threshold", threshold, "--no-handshake", "--out", "r.json"],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
        v["tp"].as_u64().unwrap()
    };
    assert_eq!(tp_of("7.7e-2"), 3);
    assert_eq!(tp_of("7.6e-2"), 0);
    // A leading hyphen is treated as part of the value, not a flag: the
    // number reaches threshold validation, which rejects it as data.
    let out = run_in(
        dir.path(),
        &["eval", "--trace", "m.pcap", "--scheme", "lpr", "--threshold", "-1e3"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("-1000"));
}
