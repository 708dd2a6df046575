use std::fs;
use std::process::{Command, Output};

fn magpie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magpie")).args(args).output().unwrap()
}

#[test]
fn simulate_and_compare_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let sim = magpie(&["simulate", "--n", "32", "--m", "8", "--out", out]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    for f in ["probe.cf2d", "object.cf2d", "measurements.meas", "manifest.ini"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cmp = magpie(&["compare", "--n", "32", "--m", "8", "--max-epochs", "3", "--out", out]);
    assert!(cmp.status.success());
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("solver,epoch,residual,error,grad_criterion,wall_ms\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(
        &cfg,
        "[experiment]\nn = 64\nm = 8\nmax_epochs = 50\ntiming = false\n\n[solver.first]\nalgorithm = rpie\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = magpie(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "16",
        "--max-epochs",
        "2",
        "--algorithm",
        "lbfgs",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let manifest = fs::read_to_string(out.join("manifest.ini")).unwrap();
    assert!(manifest.contains("n=16"));
    assert!(manifest.contains("algorithm=lbfgs"));
    let log = fs::read_to_string(out.join("first").join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn probe_and_object_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(magpie(&["probe", "--m", "16", "--out", out]).status.success());
    assert!(magpie(&["object", "--n", "32", "--m", "8", "--kind", "circuit", "--out", out]).status.success());
    assert!(dir.path().join("probe.cf2d").exists());
    assert!(dir.path().join("object").join("magnitude.pgm").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(magpie(&["simulate", "--m", "12", "--out", out]).status.code(), Some(2));
    assert_eq!(
        magpie(&["reconstruct", "--n", "32", "--m", "8", "--levels", "9", "--out", out]).status.code(),
        Some(2)
    );
    assert_eq!(magpie(&["compare", "--config", "/nonexistent.ini"]).status.code(), Some(2));
    assert_eq!(magpie(&["bogus"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let out = blocker.join("sub");
    let code = magpie(&["simulate", "--n", "16", "--m", "8", "--out", out.to_str().unwrap()]).status.code();
    assert_eq!(code, Some(1));
}
