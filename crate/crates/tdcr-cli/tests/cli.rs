use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use approx::assert_relative_eq;

use tdcr_cli::config::ConfigFile;
use tdcr_cli::csvio::{read_log_csv, write_log_csv};
use tdcr_core::sim::run_tracking_experiment;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tdcr"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("test.cfg");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn bundled_configs_parse_and_build_experiments() {
    for name in ["paper_sim_2seg.cfg", "paper_step_1seg.cfg"] {
        let cfg = ConfigFile::load(&repo_config(name)).unwrap();
        let exp = cfg.build_experiment().unwrap();
        assert!(exp.validate().is_ok(), "{name} builds an invalid experiment");
    }

    let sim = ConfigFile::load(&repo_config("paper_sim_2seg.cfg")).unwrap();
    let exp = sim.build_experiment().unwrap();
    assert_eq!(exp.robot.segments.len(), 2);
    assert_eq!(exp.robot.tendon_count, 5);
    assert_relative_eq!(exp.duration, 60.0);
    assert_relative_eq!(exp.controller.kp, 1500.0);

    let step = ConfigFile::load(&repo_config("paper_step_1seg.cfg")).unwrap();
    let exp = step.build_experiment().unwrap();
    assert_eq!(exp.robot.segments.len(), 1);
    let target = exp.trajectory.sample(1.0, 2);
    assert_relative_eq!(target[0], 0.005497787143782138, epsilon = 1e-15);
    assert_relative_eq!(target[1], 0.0, epsilon = 1e-15);
    let target = exp.trajectory.sample(3.0, 2);
    assert_relative_eq!(target[0], target[1], epsilon = 1e-15);
}

#[test]
fn csv_log_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ConfigFile::load(&repo_config("paper_step_1seg.cfg")).unwrap();
    let mut exp = cfg.build_experiment().unwrap();
    exp.duration = 0.05;
    let log = run_tracking_experiment(&exp).unwrap();

    let path = dir.path().join("log.csv");
    write_log_csv(&path, &log, 1, 5).unwrap();
    let back = read_log_csv(&path).unwrap();

    assert_eq!(back.rows(), log.rows());
    assert_eq!(back.time, log.time);
    assert_eq!(back.qm_des, log.qm_des);
    assert_eq!(back.qm, log.qm);
    assert_eq!(back.qm_dot, log.qm_dot);
    assert_eq!(back.tau, log.tau);
    assert_eq!(back.forces, log.forces);
}

#[test]
fn track_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = bin()
        .args(["--config"])
        .arg(repo_config("paper_step_1seg.cfg"))
        .args(["--out"])
        .arg(&out)
        .args(["--duration", "0.05", "track"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("track.csv").is_file());
    assert!(out.join("track_rmse.csv").is_file());

    let log = read_log_csv(&out.join("track.csv")).unwrap();
    assert_eq!(log.rows(), 51);
    assert_relative_eq!(log.time[0], 0.0);
    assert_relative_eq!(log.time[50], 0.05, epsilon = 1e-12);

    let header = fs::read_to_string(out.join("track.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert_eq!(
        header,
        "t,qRe_des_1,qIm_des_1,qRe_1,qIm_1,qRe_dot_1,qIm_dot_1,tauRe_1,tauIm_1,\
         F1_1,F2_1,F3_1,F4_1,F5_1"
    );
}

#[test]
fn track_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = bin()
            .args(["--config"])
            .arg(repo_config("paper_step_1seg.cfg"))
            .args(["--out"])
            .arg(&out)
            .args(["--duration", "0.05", "track"])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read_to_string(out.join("track.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn energies_and_forces_diagnostic_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("diag");
    let status = bin()
        .args(["--config"])
        .arg(repo_config("paper_step_1seg.cfg"))
        .args(["--out"])
        .arg(&out)
        .args(["--duration", "0.05", "energies"])
        .status()
        .unwrap();
    assert!(status.success());
    let energies = fs::read_to_string(out.join("energies.csv")).unwrap();
    assert!(energies.starts_with("t,backbone_trans,backbone_rot,"));

    let status = bin()
        .args(["--config"])
        .arg(repo_config("paper_step_1seg.cfg"))
        .args(["--out"])
        .arg(&out)
        .args(["--duration", "0.05", "forces-diagnostic"])
        .status()
        .unwrap();
    assert!(status.success());
    let forces = fs::read_to_string(out.join("forces.csv")).unwrap();
    assert!(forces.starts_with("t,total_force,coriolis_force"));
}

#[test]
fn compare_saturation_writes_both_logs_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let body = r#"
duration = 0.5

[robot]
segment_count = 1

[trajectory]
kind = "chirp"
amplitudes = [0.01, 0.0]
frequencies = [0.5, 0.0]
"#;
    let cfg = write_config(dir.path(), body);
    let status = bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out)
        .args(["compare-saturation"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("track_clip.csv").is_file());
    assert!(out.join("track_shift.csv").is_file());
    assert!(out.join("comparison.csv").is_file());

    let clip = read_log_csv(&out.join("track_clip.csv")).unwrap();
    let shift = read_log_csv(&out.join("track_shift.csv")).unwrap();
    assert_eq!(clip.rows(), shift.rows());
    assert_eq!(clip.qm_des, shift.qm_des);
    // The two strategies realize different tendon forces whenever the raw
    // solution would go negative.
    assert_ne!(clip.forces, shift.forces);
}

#[test]
fn validate_exits_zero_on_fresh_checkout() {
    let output = bin().arg("validate").output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("all 11 checks passed"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();

    let status = bin()
        .args(["--config", "/nonexistent/path.cfg", "track"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let cfg = write_config(dir.path(), "durration = 5.0\n");
    let status = bin().args(["--config"]).arg(&cfg).arg("track").status().unwrap();
    assert_eq!(status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        "[trajectory]\nkind = \"chirp\"\namplitudes = [0.01]\nfrequencies = [0.1]\n",
    );
    let status = bin().args(["--config"]).arg(&cfg).arg("track").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn cli_overrides_take_precedence_over_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ovr");
    let status = bin()
        .args(["--config"])
        .arg(repo_config("paper_sim_2seg.cfg"))
        .args(["--out"])
        .arg(&out)
        .args(["--duration", "0.02", "--strategy", "clip", "track"])
        .status()
        .unwrap();
    assert!(status.success());
    let log = read_log_csv(&out.join("track.csv")).unwrap();
    assert_eq!(log.rows(), 21);
    // Clip never lets a force go negative.
    for r in 0..log.rows() {
        for c in 0..log.forces.ncols() {
            assert!(log.forces[(r, c)] >= 0.0);
        }
    }
}
