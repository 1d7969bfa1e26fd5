//! Implementations of the CLI commands.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use tdcr_core::checks;
use tdcr_core::control::SaturationStrategy;
use tdcr_core::dynamics::{manifold_terms, DynState};
use tdcr_core::sim::{run_tracking_experiment, TrajectoryLog};

use crate::config::ConfigFile;
use crate::csvio;
use crate::CliError;

fn channel_name(c: usize) -> String {
    let part = if c.is_multiple_of(2) { "qRe" } else { "qIm" };
    format!("{part}_{}", c / 2 + 1)
}

fn print_rmse(label: &str, rmse: &DVector<f64>) {
    for c in 0..rmse.len() {
        println!("rmse[{label}] {} = {:.6e} m", channel_name(c), rmse[c]);
    }
}

pub fn track(cfg: &ConfigFile, out: &Path) -> Result<(), CliError> {
    let exp = cfg.build_experiment()?;
    let segments = exp.robot.segments.len();
    let tendons = exp.robot.tendon_count;
    log::info!(
        "tracking: {} segment(s), {} tendons, {:.1} s at {:.0} Hz control",
        segments,
        tendons,
        exp.duration,
        exp.controller.control_rate
    );
    let started = Instant::now();
    let log = run_tracking_experiment(&exp)?;
    let elapsed = started.elapsed();
    log::info!("simulated {:.1} s in {:.2} s wall", exp.duration, elapsed.as_secs_f64());

    let csv = out.join("track.csv");
    csvio::write_log_csv(&csv, &log, segments, tendons)?;
    let rmse = log.rmse();
    csvio::write_rmse_csv(&out.join("track_rmse.csv"), &["track"], std::slice::from_ref(&rmse))?;
    println!("wrote {} ({} rows)", csv.display(), log.rows());
    print_rmse("track", &rmse);
    Ok(())
}

pub fn energies(cfg: &ConfigFile, out: &Path) -> Result<(), CliError> {
    let mut exp = cfg.build_experiment()?;
    exp.log_energies = true;
    log::info!(
        "energy trace: {} segment(s), {:.1} s at {:.0} Hz output",
        exp.robot.segments.len(),
        exp.duration,
        exp.output_rate
    );
    let log = run_tracking_experiment(&exp)?;
    let csv = out.join("energies.csv");
    csvio::write_energy_csv(&csv, &log.time, &log.energies)?;
    let peak_t = log
        .energies
        .iter()
        .map(|e| e.kinetic_total)
        .fold(0.0f64, f64::max);
    let peak_u = log
        .energies
        .iter()
        .map(|e| e.potential_total)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("wrote {} ({} rows)", csv.display(), log.rows());
    println!("peak kinetic energy   = {peak_t:.6e} J");
    println!("peak potential energy = {peak_u:.6e} J");
    Ok(())
}

pub fn forces_diagnostic(cfg: &ConfigFile, out: &Path) -> Result<(), CliError> {
    let exp = cfg.build_experiment()?;
    log::info!(
        "force diagnostic: {} segment(s), {:.1} s at {:.0} Hz output",
        exp.robot.segments.len(),
        exp.duration,
        exp.output_rate
    );
    let log = run_tracking_experiment(&exp)?;

    // Re-evaluate the model along the logged trajectory with the Coriolis
    // term switched on to expose its share of the generalized force.
    let mut robot = exp.robot.clone();
    robot.flags.coriolis = true;
    let dof = robot.dof();
    let mut total = Vec::with_capacity(log.rows());
    let mut coriolis = Vec::with_capacity(log.rows());
    for r in 0..log.rows() {
        let state = DynState {
            time: log.time[r],
            qm: log.qm.row(r).transpose(),
            qm_dot: log.qm_dot.row(r).transpose(),
        };
        let terms = manifold_terms(&robot, &state)?;
        let c_force = terms.coriolis.as_ref().expect("coriolis enabled") * &state.qm_dot;
        let mut tau = DVector::zeros(dof);
        for c in 0..dof {
            tau[c] = log.tau[(r, c)];
        }
        total.push(tau.norm());
        coriolis.push(c_force.norm());
    }

    let csv = out.join("forces.csv");
    csvio::write_force_diagnostic_csv(&csv, &log.time, &total, &coriolis)?;
    let peak_total = total.iter().fold(0.0f64, |a, &b| a.max(b));
    let peak_cor = coriolis.iter().fold(0.0f64, |a, &b| a.max(b));
    println!("wrote {} ({} rows)", csv.display(), log.rows());
    println!("peak total generalized force = {peak_total:.6e} N");
    println!("peak Coriolis force          = {peak_cor:.6e} N");
    if peak_total > 0.0 {
        println!(
            "Coriolis share of peak       = {:.4} %",
            100.0 * peak_cor / peak_total
        );
    }
    Ok(())
}

pub fn compare_saturation(cfg: &ConfigFile, out: &Path) -> Result<(), CliError> {
    let base = cfg.build_experiment()?;
    let segments = base.robot.segments.len();
    let tendons = base.robot.tendon_count;

    let mut exp_clip = base.clone();
    exp_clip.strategy = SaturationStrategy::Clip;
    let mut exp_shift = base;
    exp_shift.strategy = SaturationStrategy::Shift;
    log::info!(
        "saturation comparison: {} segment(s), {:.1} s per run",
        segments,
        exp_clip.duration
    );

    // The two runs are independent; run them side by side.
    let (res_clip, res_shift) = std::thread::scope(|scope| {
        let clip = scope.spawn(|| run_tracking_experiment(&exp_clip));
        let shift = scope.spawn(|| run_tracking_experiment(&exp_shift));
        (clip.join(), shift.join())
    });
    let log_clip: TrajectoryLog = res_clip.expect("clip run panicked")?;
    let log_shift: TrajectoryLog = res_shift.expect("shift run panicked")?;

    csvio::write_log_csv(&out.join("track_clip.csv"), &log_clip, segments, tendons)?;
    csvio::write_log_csv(&out.join("track_shift.csv"), &log_shift, segments, tendons)?;
    let rmse_clip = log_clip.rmse();
    let rmse_shift = log_shift.rmse();
    csvio::write_rmse_csv(
        &out.join("comparison.csv"),
        &["clip", "shift"],
        &[rmse_clip.clone(), rmse_shift.clone()],
    )?;

    println!("channel      rmse_clip      rmse_shift     improvement");
    let mut improvements = Vec::new();
    for c in 0..rmse_clip.len() {
        let imp = 100.0 * (rmse_clip[c] - rmse_shift[c]) / rmse_clip[c];
        improvements.push(imp);
        println!(
            "{:<10} {:>14.6e} {:>14.6e} {:>10.1} %",
            channel_name(c),
            rmse_clip[c],
            rmse_shift[c],
            imp
        );
    }
    let avg = improvements.iter().sum::<f64>() / improvements.len() as f64;
    println!("average RMSE improvement of shift over clip: {avg:.1} %");
    let all_better = (0..rmse_clip.len()).all(|c| rmse_shift[c] < rmse_clip[c]);
    println!(
        "shift lower on every channel: {}",
        if all_better { "yes" } else { "no" }
    );
    Ok(())
}

pub fn validate(cfg: &ConfigFile) -> Result<(), CliError> {
    let results = checks::run_all(cfg.seed);
    let mut failures = 0usize;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:<42} {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    if failures == 0 {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failures))
    }
}
