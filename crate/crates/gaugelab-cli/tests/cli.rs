//! End-to-end tests of the gaugelab binary: exit codes, artifact layout,
//! and byte-identical reruns (the determinism acceptance criterion).

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaugelab"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gaugelab-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL_CHAIN: &str = "\
[model]\ngroup = u1\ncutoff = 1\n\
[couplings]\na = 1.0\ng = 1.0\nm = 0.5\n\
[fermion]\ncomponents = 1\n\
[lattice]\ndimension = 1\n";

#[test]
fn lattice_audit_passes_and_is_byte_identical() {
    let dir = tmp_dir("audit");
    let cfg = write_config(&dir, "[lattice-audit]\nd_values = 1 2 3\noffset = 2\n");
    let run = |out: &str| {
        let out_dir = dir.join(out);
        let status = bin()
            .args(["lattice-audit", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .args(["--seed", "7"])
            .status()
            .unwrap();
        assert!(status.success(), "lattice-audit should pass");
        std::fs::read(out_dir.join("lattice-audit.csv")).unwrap()
    };
    let first = run("a");
    let second = run("b");
    assert_eq!(first, second, "identical config+seed must give identical bytes");
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("boundary-links,1,3,54,54,true"));
    assert!(text.contains("boundary-links,2,4,150,150,true"));
    assert!(text.contains("boundary-links,3,5,294,294,true"));
    assert!(text.contains("config_hash="));
    assert!(!text.contains("false"));
}

#[test]
fn unknown_experiment_is_invalid_input() {
    let dir = tmp_dir("unknown");
    let status = bin()
        .args(["frobnicate", "--out"])
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bad_config_value_reports_field_path() {
    let dir = tmp_dir("badcfg");
    let cfg = write_config(&dir, "[couplings]\na = banana\n");
    let out = bin()
        .args(["ground", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("couplings.a"), "stderr: {err}");
}

#[test]
fn budget_refusal_lists_arithmetic() {
    let dir = tmp_dir("budget");
    let cfg = write_config(
        &dir,
        &format!("{SMALL_CHAIN}[budget]\nsector = 100\n[lr-verify]\nradius = 2\n"),
    );
    let out = bin()
        .args(["lr-verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2^5"), "budget arithmetic missing: {err}");
    assert!(err.contains("exceeds the budget 100"), "stderr: {err}");
}

#[test]
fn lr_verify_small_chain_passes() {
    let dir = tmp_dir("lr");
    let cfg = write_config(
        &dir,
        &format!("{SMALL_CHAIN}[lr-verify]\nradius = 2\nt_grid = 0.25 0.5\n"),
    );
    let out_dir = dir.join("out");
    let status = bin()
        .args(["lr-verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("lr-verify.csv")).unwrap();
    assert!(csv.starts_with("# gaugelab"));
    assert!(csv.lines().count() >= 5, "{csv}");
    let manifest = std::fs::read_to_string(out_dir.join("lr-verify-manifest.json")).unwrap();
    assert!(manifest.contains("\"checks_passed\": true"));
}

#[test]
fn ground_with_subadditivity() {
    let dir = tmp_dir("ground");
    let cfg = write_config(
        &dir,
        &format!("{SMALL_CHAIN}[ground]\nradii = 1 2\nsplit = 2\n"),
    );
    let out_dir = dir.join("out");
    let status = bin()
        .args(["ground", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--subadditivity"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("ground.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}"); // 3 header lines + 2 volumes
    let sub = std::fs::read_to_string(out_dir.join("ground-subadditivity.csv")).unwrap();
    for line in sub.lines().skip(3) {
        assert!(line.ends_with(",true") || line.contains(",true,"), "{line}");
    }
}

#[test]
fn gauss_checks_pass_and_dyson_certificate_holds() {
    let dir = tmp_dir("gauss");
    let cfg = write_config(
        &dir,
        &format!("{SMALL_CHAIN}[gauss]\nradius = 1\n[dyson]\nradius = 1\nt = 0.04\n"),
    );
    let out_dir = dir.join("out");
    let status = bin()
        .args(["gauss", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("gauss.csv")).unwrap();
    assert!(csv.contains("projector-idempotent"));
    assert!(!csv.contains("false"), "{csv}");

    let status = bin()
        .args(["dyson", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("dyson.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9, "{csv}"); // 3 header + 6 orders
}

#[test]
fn converge_small_volumes() {
    let dir = tmp_dir("conv");
    let cfg = write_config(
        &dir,
        &format!("{SMALL_CHAIN}[converge]\nradii = 1 2 3\nt = 0.5\n"),
    );
    let out_dir = dir.join("out");
    let status = bin()
        .args(["converge", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("converge.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(3).collect();
    assert_eq!(rows.len(), 2);
    // diff_norm column decreases with volume.
    let diff = |row: &str| -> f64 { row.split(',').nth(2).unwrap().parse().unwrap() };
    assert!(diff(rows[1]) < diff(rows[0]), "{csv}");
}

#[test]
fn run_with_empty_experiment_list_emits_manifest_only() {
    let dir = tmp_dir("runempty");
    let cfg = write_config(&dir, "[run]\n");
    let out_dir = dir.join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = std::fs::read_to_string(out_dir.join("run-manifest.json")).unwrap();
    assert!(manifest.contains("\"experiment\": \"run\""));
    let entries: Vec<_> = std::fs::read_dir(&out_dir).unwrap().collect();
    assert_eq!(entries.len(), 1, "manifest only");
}

#[test]
fn run_dispatches_experiment_list() {
    let dir = tmp_dir("runlist");
    let cfg = write_config(
        &dir,
        &format!("{SMALL_CHAIN}[run]\nexperiments = lattice-audit gauss\n[gauss]\nradius = 1\n"),
    );
    let out_dir = dir.join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("lattice-audit.csv").exists());
    assert!(out_dir.join("gauss.csv").exists());
    assert!(out_dir.join("run-manifest.json").exists());
}
