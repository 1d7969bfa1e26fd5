//! CSV artifacts. Floats are printed with 17 significant digits so parsing
//! an emitted log reproduces the in-memory values bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use tdcr_core::dynamics::EnergyBreakdown;
use tdcr_core::sim::TrajectoryLog;

use crate::CliError;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write '{}': {e}", path.display()))
}

/// Header and rows of a trajectory log: time, then per segment the desired,
/// actual and rate coordinates, the realized torque, and the tendon forces.
pub fn write_log_csv(
    path: &Path,
    log: &TrajectoryLog,
    segments: usize,
    tendons: usize,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 1..=segments {
            write!(
                w,
                ",qRe_des_{i},qIm_des_{i},qRe_{i},qIm_{i},qRe_dot_{i},qIm_dot_{i},tauRe_{i},tauIm_{i}"
            )?;
            for j in 1..=tendons {
                write!(w, ",F{j}_{i}")?;
            }
        }
        writeln!(w)?;
        for r in 0..log.rows() {
            write!(w, "{}", fmt(log.time[r]))?;
            for i in 0..segments {
                for c in [2 * i, 2 * i + 1] {
                    write!(w, ",{}", fmt(log.qm_des[(r, c)]))?;
                }
                for c in [2 * i, 2 * i + 1] {
                    write!(w, ",{}", fmt(log.qm[(r, c)]))?;
                }
                for c in [2 * i, 2 * i + 1] {
                    write!(w, ",{}", fmt(log.qm_dot[(r, c)]))?;
                }
                for c in [2 * i, 2 * i + 1] {
                    write!(w, ",{}", fmt(log.tau[(r, c)]))?;
                }
                for j in 0..tendons {
                    write!(w, ",{}", fmt(log.forces[(r, i * tendons + j)]))?;
                }
            }
            writeln!(w)?;
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}

/// Parses a log emitted by [`write_log_csv`], recovering the layout from the
/// header. Energies and controller metadata are not stored in the CSV.
pub fn read_log_csv(path: &Path) -> Result<TrajectoryLog, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("cannot read '{}': {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("'{}' is empty", path.display())))?
        .map_err(|e| CliError::Config(format!("cannot read '{}': {e}", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let segments = cols
        .iter()
        .filter(|c| c.starts_with("qRe_des_"))
        .count();
    let tendons = (1..)
        .take_while(|j| cols.iter().any(|c| **c == format!("F{j}_1")))
        .count();
    if segments == 0 || cols.len() != 1 + segments * (8 + tendons) {
        return Err(CliError::Config(format!(
            "'{}' has an unrecognized header",
            path.display()
        )));
    }

    let mut time = Vec::new();
    let mut qm_des = Vec::new();
    let mut qm = Vec::new();
    let mut qm_dot = Vec::new();
    let mut tau = Vec::new();
    let mut forces = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line
            .map_err(|e| CliError::Config(format!("cannot read '{}': {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(|f| {
            f.parse::<f64>().map_err(|e| {
                CliError::Config(format!(
                    "'{}' line {}: bad float '{f}': {e}",
                    path.display(),
                    line_no + 2
                ))
            })
        });
        let mut next = || -> Result<f64, CliError> {
            match fields.next() {
                Some(v) => v,
                None => Err(CliError::Config(format!(
                    "'{}' line {}: too few columns",
                    path.display(),
                    line_no + 2
                ))),
            }
        };
        time.push(next()?);
        for _ in 0..segments {
            for _ in 0..2 {
                qm_des.push(next()?);
            }
            for _ in 0..2 {
                qm.push(next()?);
            }
            for _ in 0..2 {
                qm_dot.push(next()?);
            }
            for _ in 0..2 {
                tau.push(next()?);
            }
            for _ in 0..tendons {
                forces.push(next()?);
            }
        }
    }

    let rows = time.len();
    let dof = 2 * segments;
    // The writer groups channels per segment; regroup into channel-major
    // matrices (rows x dof). For per-segment layout the two orders already
    // coincide because columns are (2i, 2i+1) in segment order.
    Ok(TrajectoryLog {
        time,
        qm_des: DMatrix::from_row_slice(rows, dof, &qm_des),
        qm: DMatrix::from_row_slice(rows, dof, &qm),
        qm_dot: DMatrix::from_row_slice(rows, dof, &qm_dot),
        tau: DMatrix::from_row_slice(rows, dof, &tau),
        forces: DMatrix::from_row_slice(rows, segments * tendons, &forces),
        energies: Vec::new(),
        max_abs_integral: 0.0,
    })
}

/// Per-component energy trace.
pub fn write_energy_csv(
    path: &Path,
    time: &[f64],
    energies: &[EnergyBreakdown],
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        writeln!(
            w,
            "t,backbone_trans,backbone_rot,tendon_path_trans,tendon_path_rot,\
             tendon_displacement,disk_trans,disk_rot,gravity_backbone,gravity_tendons,\
             gravity_disks,elastic_backbone,kinetic_total,potential_total"
        )?;
        for (t, e) in time.iter().zip(energies.iter()) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt(*t),
                fmt(e.backbone_trans),
                fmt(e.backbone_rot),
                fmt(e.tendon_path_trans),
                fmt(e.tendon_path_rot),
                fmt(e.tendon_displacement),
                fmt(e.disk_trans),
                fmt(e.disk_rot),
                fmt(e.gravity_backbone),
                fmt(e.gravity_tendons),
                fmt(e.gravity_disks),
                fmt(e.elastic_backbone),
                fmt(e.kinetic_total),
                fmt(e.potential_total),
            )?;
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}

/// Total applied generalized force vs the Coriolis contribution.
pub fn write_force_diagnostic_csv(
    path: &Path,
    time: &[f64],
    total: &[f64],
    coriolis: &[f64],
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        writeln!(w, "t,total_force,coriolis_force")?;
        for i in 0..time.len() {
            writeln!(w, "{},{},{}", fmt(time[i]), fmt(total[i]), fmt(coriolis[i]))?;
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}

/// Per-channel RMSE rows, one column block per labeled run.
pub fn write_rmse_csv(
    path: &Path,
    labels: &[&str],
    rmse: &[nalgebra::DVector<f64>],
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        write!(w, "channel")?;
        for label in labels {
            write!(w, ",rmse_{label}")?;
        }
        writeln!(w)?;
        let dof = rmse[0].len();
        for c in 0..dof {
            let seg = c / 2 + 1;
            let part = if c % 2 == 0 { "qRe" } else { "qIm" };
            write!(w, "{part}_{seg}")?;
            for r in rmse {
                write!(w, ",{}", fmt(r[c]))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}
