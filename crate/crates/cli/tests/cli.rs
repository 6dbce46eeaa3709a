//! End-to-end runs of the `twoscale-hj` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twoscale-hj"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.ini");
    std::fs::write(&path, body).unwrap();
    path
}

/// Reads a CSV into its header and rows of numbers (non-numeric cells are NaN).
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const FAST: &str = "[cell]\nfinger_rho = 2, 3\nline_rho = 4, 8\neps_rho = 2, 3\ntable_nodes = 5\n";

#[test]
fn hamiltonian_table_contains_reference_value() {
    let dir = tempfile::tempdir().unwrap();
    // media file resolved relative to the config's directory
    std::fs::copy(configs().join("asymmetric.txt"), dir.path().join("asym.txt")).unwrap();
    let cfg = write_config(dir.path(), "[medium]\nfile = asym.txt\n");
    let out = run(&["hamiltonian-table", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("out/hamiltonians.csv"));
    let (p1, p2, hr) = (column(&h, "p1"), column(&h, "p2"), column(&h, "h_right"));
    let row = rows.iter().find(|r| r[p1] == 2.0 && r[p2] == 0.5).expect("node (2, 0.5)");
    assert_eq!(row[hr], 1.0);
    let (h, rows) = read_csv(&dir.path().join("out/e0.csv"));
    assert_eq!(rows.len(), 21);
    assert!(h.contains(&"e0_m".to_string()));
}

#[test]
fn identical_media_strip_column_equals_right_column() {
    let dir = tempfile::tempdir().unwrap();
    let media = configs().join("identical.txt");
    let cfg = write_config(
        dir.path(),
        &format!("[medium]\nfile = {}\n[cell]\ntable_nodes = 9\n", media.display()),
    );
    let out = run(&["hamiltonian-table", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("out/hamiltonians.csv"));
    let (hm, hr) = (column(&h, "h_m"), column(&h, "h_right"));
    for r in rows {
        assert!((r[hm] - r[hr]).abs() <= 1e-9, "{r:?}");
    }
}

#[test]
fn malformed_profile_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[profile]\na = 0.7\nb = 0.3\n");
    let out = run(&["hamiltonian-table", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("profile.b"));
}

#[test]
fn empty_p2_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[cell]\np2 =\n");
    let out = run(&["flux-limiters", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cell.p2"));
}

#[test]
fn missing_medium_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[medium]\nfile = no_such_medium.txt\n");
    let out = run(&["acceptance", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("medium.file"));
}

#[test]
fn zero_tolerance_fails_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["acceptance", "--tol", "0"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerance must be > 0"));
}

#[test]
fn identical_flux_limiters_match_e0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("[medium]\npreset = identical\n[scales]\neps = 0.4\n{FAST}"));
    let out = run(&["flux-limiters", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("out/limiters.csv"));
    assert_eq!(rows.len(), 3);
    let (p2, e0, e, check) = (column(&h, "p2"), column(&h, "e0_right"), column(&h, "e"), column(&h, "check"));
    for r in &rows {
        assert!((r[e] - r[e0]).abs() <= 0.02, "{r:?}");
        assert!(r[check].abs() <= 0.05, "{r:?}");
        assert!((r[e0] - (r[p2].abs() - 1.0)).abs() < 1e-12);
    }
    for f in ["limiter_e0_left.csv", "limiter_mr.csv", "limiter_limit.csv", "limiter_eps_0.4.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn asymmetric_check_column_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scales]\neps = 0.4\n[cell]\np2 = 1\ntable_nodes = 11\nfinger_rho = 2, 3\nline_rho = 4, 8\neps_rho = 2, 3\n");
    let out = run(&["flux-limiters", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("out/limiters.csv"));
    let check = column(&h, "check");
    assert!(rows.iter().all(|r| r[check].abs() <= 0.05), "{rows:?}");
}

#[test]
fn flat_solve_of_identical_media_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("[medium]\npreset = identical\nfar_field_cap = 0\n{FAST}"));
    let out = run(&["solve", "--kind", "flat", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("out/field_flat.csv"));
    let v = column(&h, "value");
    assert!(rows.iter().all(|r| (r[v] - 1.0).abs() <= 1e-6));
}

#[test]
fn single_scale_converge_has_no_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("[scales]\neta = 0.4\neps = 0.4\n{FAST}"));
    let out = run(&["converge", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/converge.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("direct,")).count(), 1);
    let verdict = std::fs::read_to_string(dir.path().join("out/verdict.csv")).unwrap();
    assert!(verdict.contains("direct,no verdict"), "{verdict}");
}

#[test]
fn reruns_are_hash_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("[medium]\npreset = identical\n{FAST}"));
    let out_dir = dir.path().join("out");
    for _ in 0..2 {
        let out = run(&["solve", "--kind", "direct", "--jobs", "2", "--config", cfg.to_str().unwrap()], &out_dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest = twoscale_hj_cli::manifest::load(&out_dir).unwrap();
    assert!(manifest.diagnostics.iter().any(|d| d.contains("1 artifact(s) identical")), "{:?}", manifest.diagnostics);
    assert!(!manifest.diagnostics.iter().any(|d| d.contains("changed")));
    assert!(twoscale_hj_cli::manifest::verify(&out_dir).unwrap().is_empty());
}
