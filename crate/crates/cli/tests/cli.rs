//! End-to-end runs of the `linop-pep` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linop_pep::sdp::DEFAULT_TOLERANCE;
use linop_pep_cli::config::ExperimentConfig;
use linop_pep_cli::run::solve_point;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn linop_pep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linop-pep"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn sweep_is_byte_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_path("gm_convex.toml");
    let mut csvs = Vec::new();
    for (k, jobs) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let o = linop_pep(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
            "sweep",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("gm_convex.csv")).unwrap());
        assert!(out.join("gm_convex.timing.csv").exists());
        assert!(out.join("gm_convex_F_0_last_n3.dat").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 1 + 45);
    assert!(text.starts_with("index,label,method,criterion,"));
}

#[test]
fn csv_values_agree_with_a_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let path = config_path("quadratic.toml");
    let o = linop_pep(&[
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "sweep",
    ]);
    assert!(o.status.success());
    let mut reader = csv::Reader::from_path(dir.path().join("quadratic.csv")).unwrap();
    let values: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[8].parse().unwrap())
        .collect();
    let points = ExperimentConfig::load(&path).unwrap().points().unwrap();
    for k in [0, 13, 29] {
        let row = solve_point(&points[k], DEFAULT_TOLERANCE);
        assert!((row.value.unwrap() - values[k]).abs() <= 1e-9, "point {k}");
    }
}

#[test]
fn empty_grid_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("gm_convex.toml"))
        .unwrap()
        .replace("n = [1, 2, 3, 4, 5]", "n = []");
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, text).unwrap();
    let o = linop_pep(&["--config", path.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty grid"));
}

#[test]
fn reconstruct_exports_instance_and_rejects_failed_points() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = config_path("step_sweep.toml");
    let o = linop_pep(&[
        "--config",
        sweep.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "reconstruct",
        "--point",
        "0",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "h = 0 has no worst case to reconstruct"
    );

    let o = linop_pep(&[
        "--config",
        sweep.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "reconstruct",
        "--point",
        "20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("step_sweep_point20.txt")).unwrap();
    assert!(text.starts_with("solver_objective "));
}

#[test]
fn optimal_step_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = linop_pep(&[
        "--config",
        config_path("step_sweep.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "optimal-step",
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("step_sweep_optimal_step.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);
}
