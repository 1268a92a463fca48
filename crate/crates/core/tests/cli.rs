use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cavtun"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cavtun")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn list_describes_every_kind() {
    let out = run(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in ["resonant", "detuned", "collapse_revival", "protocol", "grid_validation", "spectrum"] {
        assert!(text.contains(kind), "{kind} missing from list");
    }
    assert!(text.contains("gt,rho_LL,rho_RR,rho_ee,x_mean_over_halfb"));
}

#[test]
fn empty_config_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "empty.cfg", "");
    for cmd in ["validate", "run"] {
        let out = run(&[cmd, p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains("line 1, column 1"), "{err}");
    }
}

#[test]
fn missing_file_exits_2() {
    let out = run(&["validate", "/nonexistent/cavtun.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bundled_detuned_config_validates() {
    let cfg = scenarios().join("detuned_confinement.cfg");
    let out = run(&["validate", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "OK");
}

#[test]
fn every_bundled_config_validates() {
    for entry in fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let out = run(&["validate", path.to_str().unwrap()]);
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        }
    }
}

#[test]
fn kappa_outside_range_is_normalized_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "wrap.cfg", "kind = detuned\nkappa = 9pi/4\nt_end = 10\nsamples = 64\n");
    let out = run(&["run", p.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("warning: kappa"));
    let report = fs::read_to_string(dir.path().join("wrap_report.txt")).unwrap();
    assert!(report.contains("kappa = 0.7853981633974"), "{report}");
}

#[test]
fn domain_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.cfg", "kind = resonant\ndelta = 0.5\n");
    let out = run(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("delta = 0"));
    let p = write(dir.path(), "coarse.cfg", "kind = spectrum\npoints = 40\n");
    assert_eq!(run(&["run", p.to_str().unwrap()]).status.code(), Some(3));
    let p = write(dir.path(), "step.cfg", "kind = grid_validation\ndt = 0.5\n");
    assert_eq!(run(&["validate", p.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn bad_thread_count_exits_2() {
    let out = bin().env("CAVTUN_THREADS", "zero").arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_echoes_version_and_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("protocol.cfg");
    let out = run(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let report = fs::read_to_string(dir.path().join("protocol_report.txt")).unwrap();
    assert!(report.contains(&format!("cavtun_version = {}", env!("CARGO_PKG_VERSION"))));
    assert!(report.contains("schema_version = 1"));
    assert!(report.contains("tunnel = 0.05"));
    assert!(report.contains("fidelity = 0.99"));
}

fn sha256_hex(path: &Path) -> String {
    let bytes = fs::read(path).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = scenarios().join("revival.cfg");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let out = bin()
            .env("CAVTUN_THREADS", threads)
            .args(["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    for name in ["revival_series.csv", "revival_report.txt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn outputs_match_recorded_digests() {
    let dir = tempfile::tempdir().unwrap();
    let digests = fs::read_to_string(scenarios().join("digests.sha256")).unwrap();
    for stem in ["revival", "revival_wide_split", "detuned_confinement", "grid_validation", "protocol", "protocol_schedule", "spectrum"] {
        let cfg = scenarios().join(format!("{stem}.cfg"));
        let out = run(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{stem}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut checked = 0;
    for line in digests.lines().filter(|l| !l.trim().is_empty()) {
        let (want, name) = line.split_once("  ").unwrap();
        assert_eq!(sha256_hex(&dir.path().join(name)), want, "{name}");
        checked += 1;
    }
    assert_eq!(checked, 8);
}

#[test]
fn csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("detuned_confinement.cfg");
    assert!(run(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]).status.success());
    let csv = fs::read_to_string(dir.path().join("detuned_confinement_series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("gt,rho_LL,rho_RR,rho_ee,x_mean_over_halfb"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4096);
    assert_eq!(rows[0], vec![0.0, 1.0, 0.0, 1.0, -1.0]);
    for r in &rows {
        assert!((r[1] + r[2] - 1.0).abs() < 1e-10);
        assert!((r[4] - (r[2] - r[1])).abs() < 1e-10);
    }
}
