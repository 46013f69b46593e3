//! Black-box tests of the `planarop` binary: artifact contents, config
//! validation, and byte-level determinism of the outputs.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn planarop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planarop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_radial(out: &Path) -> Output {
    planarop(&[
        "run",
        "--potential",
        "radial_gaussian",
        "--N",
        "32",
        "--m",
        "16",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn radial_run_writes_trivial_prefactor() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_radial(dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let art: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("artifacts_m16.json")).unwrap())
            .unwrap();
    // the radial weight has constant curvature, so the prefactor is exactly 1
    let modes = art["F"]["modes"].as_array().unwrap();
    for mode in modes {
        let d = mode[0].as_i64().unwrap();
        let c = (mode[1].as_f64().unwrap(), mode[2].as_f64().unwrap());
        if d == 0 {
            assert!((c.0 - 1.0).abs() < 1e-8 && c.1.abs() < 1e-8, "F(infty) = {c:?}");
        } else {
            assert!(c.0.hypot(c.1) < 1e-8, "spurious mode {d}: {c:?}");
        }
    }

    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "m,n,kappa,a1,E_m_norm,sup_defect_Dm,norm_ratio,l2_defect,oracle_precision_bits"
    );
    assert!(lines.next().unwrap().starts_with("16,,"), "oracle columns stay empty");
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn empty_m_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = planarop(&["run", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("m list is empty"), "stderr: {err}");
}

#[test]
fn elliptic_t_beyond_bound_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = planarop(&[
        "run",
        "--potential",
        "elliptic",
        "--t",
        "0.35",
        "--m",
        "16",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("0.3"), "rejection names the bound; stderr: {err}");
    assert!(!dir.path().join("model.json").exists(), "nothing written");
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "potential=radial_gaussian\nN=16\nm=16\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = planarop(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--N",
        "32",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let model: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["N"].as_u64(), Some(32), "flag overrides the file value");
}

#[test]
fn outputs_are_deterministic() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    assert!(run_radial(dir1.path()).status.success());
    assert!(run_radial(dir2.path()).status.success());
    for name in ["model.json", "artifacts_m16.json", "report.csv"] {
        let a = std::fs::read(dir1.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}
