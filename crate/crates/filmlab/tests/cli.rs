use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use filmlab::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filmlab"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn failed(out: &Output, check: &str) -> bool {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .any(|l| l.starts_with(check) && l.contains("FAIL"))
}

#[test]
fn prototype_file_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/prototype.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = bin().arg("validate").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout)
        .lines()
        .all(|l| !l.contains("FAIL")));

    let six = write_config(tmp.path(), "[mobility]\nkind = \"power_law\"\nn = 6.0\n");
    let out = bin()
        .arg("--config")
        .arg(&six)
        .arg("validate")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(failed(&out, "mobility"));

    let strat = write_config(
        tmp.path(),
        "[scheme]\nkind = \"stratonovich\"\n[noise]\nomit = [{ k = 2, parity = \"sin\" }]\n",
    );
    let out = bin()
        .arg("--config")
        .arg(&strat)
        .arg("validate")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(failed(&out, "intensity"));

    let bad = write_config(tmp.path(), "[grid]\nn = 128\nspacing = 0.1\n");
    assert_eq!(
        bin()
            .arg("--config")
            .arg(&bad)
            .arg("validate")
            .output()
            .unwrap()
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_zero_horizon_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[time]\nt_final = 0.0\n");
    let out = tmp.path().join("zero");
    assert!(run(&cfg, &out, &["simulate"]).status.success());
    let csv = std::fs::read_to_string(out.join("path_0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let cfg = write_config(
        tmp.path(),
        "seed = 4\n[time]\nt_final = 5e-4\n[output]\npaths = 2\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&cfg, &a, &["simulate"]).status.success());
    assert!(run(&cfg, &b, &["--threads", "2", "simulate"])
        .status
        .success());
    for f in ["path_0.csv", "path_1.csv", "final_1.dat", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["report"]["completed"], 2);
    assert_eq!(manifest["config"]["seed"], 4);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    // --seed changes the hash and the trajectories
    let c = tmp.path().join("c");
    assert!(run(&cfg, &c, &["--seed", "5", "simulate"]).status.success());
    assert_ne!(
        std::fs::read(a.join("path_0.csv")).unwrap(),
        std::fs::read(c.join("path_0.csv")).unwrap()
    );
}

#[test]
fn blow_up_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    // without a potential, strong noise drives some paths onto the positivity floor
    let cfg = write_config(
        tmp.path(),
        "[time]\nt_final = 0.1\n[potential]\nkind = \"none\"\n[noise]\namplitude = 2.0\n[output]\npaths = 4\n[diagnostics]\noutput_stride = 1000\n",
    );
    let out = run(&cfg, &tmp.path().join("o"), &["simulate"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("o/manifest.json")).unwrap())
            .unwrap();
    assert!(m["report"]["blow_ups"].as_u64().unwrap() > 0);
}

#[test]
fn converge_and_compare_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[time]\nt_final = 5e-4\n[output]\npaths = 2\n");
    let out = tmp.path().join("o");
    assert_eq!(
        run(&cfg, &out, &["converge", "--levels", "0"])
            .status
            .code(),
        Some(2)
    );
    assert!(run(
        &cfg,
        &out,
        &["converge", "--levels", "2", "--spatial-levels", "1"]
    )
    .status
    .success());
    let rep: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("converge_report.json")).unwrap()).unwrap();
    assert_eq!(
        rep["report"]["temporal"]["mean_errors"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
    assert_eq!(
        rep["report"]["spatial"]["ns"],
        serde_json::json!([128, 256])
    );

    assert!(run(&cfg, &out, &["compare-schemes", "--levels", "2"])
        .status
        .success());
    let rep: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("compare_report.json")).unwrap()).unwrap();
    assert_eq!(rep["report"]["bit_equal"], true);

    // without noise every scheme is the same deterministic stepper
    let quiet = write_config(tmp.path(), "[time]\nt_final = 5e-4\n[noise]\nlevels = 0\n");
    assert!(run(&quiet, &out, &["compare-schemes", "--levels", "2"])
        .status
        .success());
    let rep: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("compare_report.json")).unwrap()).unwrap();
    assert_eq!(rep["report"]["mean_gaps"], serde_json::json!([0.0, 0.0]));
}

#[test]
fn inequalities_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let ok = bin()
        .arg("--out")
        .arg(&out)
        .args(["inequalities", "--corpus", "0"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    let rep: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("inequalities_report.json")).unwrap())
            .unwrap();
    assert_eq!(rep["report"]["total_failures"], 0);
    assert_eq!(rep["report"]["gamma_table"].as_array().unwrap().len(), 7);
    let ok = bin()
        .args([
            "inequalities",
            "--corpus",
            "50",
            "--beta=-0.4,0.9",
            "--theta",
            "8",
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
}

#[test]
fn maxreg_reports_and_weight_range() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[maxreg]\ntrials = 3\nn_t = 32\npieces = 4\nk_modes = 4\n\
                [maxreg.caccioppoli]\ntrials = 2\ncubes_per_scale = 1\nk_modes = 4\n";
    let cfg = write_config(tmp.path(), body);
    let out = tmp.path().join("o");
    let res = run(&cfg, &out, &["maxreg"]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let mr: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("maxreg_report.json")).unwrap()).unwrap();
    let runs = mr["report"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    assert_eq!(runs[1]["lambda"], 1.0);
    let cac: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("caccioppoli_report.json")).unwrap())
            .unwrap();
    assert_eq!(cac["report"]["constant_control"], 1.0);

    let edge = write_config(tmp.path(), "[maxreg]\nkappas = [1.0]\n");
    assert_eq!(run(&edge, &out, &["maxreg"]).status.code(), Some(2));
}

#[test]
fn info_prints_version() {
    let out = bin().arg("info").output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.starts_with(&format!("filmlab {}", env!("CARGO_PKG_VERSION"))));
    assert!(s.contains("rng scheme"));
}
