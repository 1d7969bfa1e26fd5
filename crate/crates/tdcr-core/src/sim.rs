//! Closed-loop simulation of the controlled robot.
//!
//! The plant integrates continuously between controller ticks while the
//! tendon forces are held (zero-order hold). Output rows are sampled from
//! the integrator's dense interpolant, so the logging rate never constrains
//! the step-size controller. Rows that land exactly on a controller tick
//! carry the torque computed at that tick.

use nalgebra::{DMatrix, DVector};

use crate::clarke::ClarkeMatrices;
use crate::control::{Controller, ControllerConfig, SaturationStrategy};
use crate::dynamics::{energies, forward_accel, DynState, EnergyBreakdown};
use crate::kinematics::RobotSpec;
use crate::ode::Dp45;
use crate::{Error, Result};

/// Sinusoid with linearly increasing frequency:
/// `A sin(2 pi (f0 t + ramp t^2 / 2) + phase)`.
pub fn chirp(t: f64, amplitude: f64, f0: f64, ramp: f64, phase: f64) -> f64 {
    amplitude * (2.0 * std::f64::consts::PI * (f0 * t + 0.5 * ramp * t * t) + phase).sin()
}

/// Time derivative of [`chirp`].
pub fn chirp_rate(t: f64, amplitude: f64, f0: f64, ramp: f64, phase: f64) -> f64 {
    let arg = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * ramp * t * t) + phase;
    amplitude * arg.cos() * 2.0 * std::f64::consts::PI * (f0 + ramp * t)
}

/// One setpoint interval of a step sequence: `target` holds on
/// `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInterval {
    pub start: f64,
    pub end: f64,
    pub target: DVector<f64>,
}

/// Desired manifold trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySpec {
    /// Hold a fixed setpoint.
    Constant(DVector<f64>),
    /// Independent chirp per coordinate.
    Chirp {
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
        /// Frequency ramp rate (Hz/s), shared by all coordinates.
        ramp: f64,
        phases: Vec<f64>,
    },
    /// Piecewise-constant setpoints; zero outside every interval.
    StepSequence(Vec<StepInterval>),
}

impl TrajectorySpec {
    /// Chirps with zero phase on every coordinate.
    pub fn chirp(amplitudes: Vec<f64>, frequencies: Vec<f64>, ramp: f64) -> Self {
        let phases = vec![0.0; amplitudes.len()];
        TrajectorySpec::Chirp {
            amplitudes,
            frequencies,
            ramp,
            phases,
        }
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        let check = |len: usize, context: &'static str| {
            if len != dof {
                Err(Error::DimensionMismatch {
                    context,
                    expected: dof,
                    actual: len,
                })
            } else {
                Ok(())
            }
        };
        match self {
            TrajectorySpec::Constant(q) => check(q.len(), "trajectory setpoint"),
            TrajectorySpec::Chirp {
                amplitudes,
                frequencies,
                ramp,
                phases,
            } => {
                check(amplitudes.len(), "chirp amplitudes")?;
                check(frequencies.len(), "chirp frequencies")?;
                check(phases.len(), "chirp phases")?;
                if !ramp.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "chirp ramp must be finite, got {ramp}"
                    )));
                }
                Ok(())
            }
            TrajectorySpec::StepSequence(steps) => {
                for step in steps {
                    check(step.target.len(), "step target")?;
                    if step.end <= step.start || step.start.is_nan() || step.end.is_nan() {
                        return Err(Error::InvalidParameter(format!(
                            "step interval must have end > start, got [{}, {})",
                            step.start, step.end
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Desired coordinates at time `t`.
    pub fn sample(&self, t: f64, dof: usize) -> DVector<f64> {
        match self {
            TrajectorySpec::Constant(q) => q.clone(),
            TrajectorySpec::Chirp {
                amplitudes,
                frequencies,
                ramp,
                phases,
            } => DVector::from_fn(dof, |i, _| {
                chirp(t, amplitudes[i], frequencies[i], *ramp, phases[i])
            }),
            TrajectorySpec::StepSequence(steps) => steps
                .iter()
                .find(|s| t >= s.start && t < s.end)
                .map(|s| s.target.clone())
                .unwrap_or_else(|| DVector::zeros(dof)),
        }
    }

    /// Desired coordinate rates at time `t` (zero for piecewise-constant
    /// trajectories).
    pub fn sample_rate(&self, t: f64, dof: usize) -> DVector<f64> {
        match self {
            TrajectorySpec::Chirp {
                amplitudes,
                frequencies,
                ramp,
                phases,
            } => DVector::from_fn(dof, |i, _| {
                chirp_rate(t, amplitudes[i], frequencies[i], *ramp, phases[i])
            }),
            _ => DVector::zeros(dof),
        }
    }
}

/// A complete closed-loop experiment description.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub robot: RobotSpec,
    pub controller: ControllerConfig,
    pub strategy: SaturationStrategy,
    /// Baseline tendon force added by the `Shift` strategy (N).
    pub pretension: f64,
    pub trajectory: TrajectorySpec,
    /// Total simulated time (s).
    pub duration: f64,
    /// Logging rate (Hz).
    pub output_rate: f64,
    pub rtol: f64,
    pub atol: f64,
    /// State at `t = 0`.
    pub initial: DynState,
    /// Also evaluate the energy breakdown at every output row.
    pub log_energies: bool,
}

impl Experiment {
    /// Experiment with shift saturation, logging at the control rate,
    /// default tolerances, starting from rest.
    pub fn new(
        robot: RobotSpec,
        controller: ControllerConfig,
        trajectory: TrajectorySpec,
        duration: f64,
    ) -> Self {
        let dof = robot.dof();
        let output_rate = controller.control_rate;
        Experiment {
            robot,
            controller,
            strategy: SaturationStrategy::Shift,
            pretension: 0.0,
            trajectory,
            duration,
            output_rate,
            rtol: 1e-6,
            atol: 1e-9,
            initial: DynState::rest(dof),
            log_energies: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.controller.validate()?;
        self.trajectory.validate(self.robot.dof())?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.output_rate > 0.0 && self.output_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "output rate must be positive, got {}",
                self.output_rate
            )));
        }
        if self.pretension < 0.0 || self.pretension.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "pretension must be non-negative, got {}",
                self.pretension
            )));
        }
        self.robot.check_dof(&self.initial.qm, "initial state")?;
        self.robot.check_dof(&self.initial.qm_dot, "initial state")?;
        Ok(())
    }
}

/// Time-sampled result of a simulation. Matrix rows correspond to `time`
/// entries; coordinate matrices have `dof` columns and `forces` has
/// `segments * tendons` columns.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub time: Vec<f64>,
    pub qm_des: DMatrix<f64>,
    pub qm: DMatrix<f64>,
    pub qm_dot: DMatrix<f64>,
    /// Realized manifold torque (from the applied tendon forces).
    pub tau: DMatrix<f64>,
    /// Applied tendon forces, segment-major.
    pub forces: DMatrix<f64>,
    /// Energy breakdown per row; empty unless requested.
    pub energies: Vec<EnergyBreakdown>,
    /// Largest integral-state magnitude seen at any controller tick (N).
    pub max_abs_integral: f64,
}

impl TrajectoryLog {
    pub fn rows(&self) -> usize {
        self.time.len()
    }

    /// Root-mean-square tracking error per coordinate.
    pub fn rmse(&self) -> DVector<f64> {
        let rows = self.rows().max(1) as f64;
        let dof = self.qm.ncols();
        DVector::from_fn(dof, |c, _| {
            let sum: f64 = (0..self.rows())
                .map(|r| {
                    let e = self.qm[(r, c)] - self.qm_des[(r, c)];
                    e * e
                })
                .sum();
            (sum / rows).sqrt()
        })
    }
}

/// Row accumulator that keeps the flat layout until the run finishes.
struct LogBuilder {
    dof: usize,
    force_cols: usize,
    log_energies: bool,
    time: Vec<f64>,
    qm_des: Vec<f64>,
    qm: Vec<f64>,
    qm_dot: Vec<f64>,
    tau: Vec<f64>,
    forces: Vec<f64>,
    energies: Vec<EnergyBreakdown>,
}

impl LogBuilder {
    fn new(dof: usize, force_cols: usize, log_energies: bool) -> Self {
        LogBuilder {
            dof,
            force_cols,
            log_energies,
            time: Vec::new(),
            qm_des: Vec::new(),
            qm: Vec::new(),
            qm_dot: Vec::new(),
            tau: Vec::new(),
            forces: Vec::new(),
            energies: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        robot: &RobotSpec,
        t: f64,
        qm_des: &DVector<f64>,
        y: &DVector<f64>,
        tau: &DVector<f64>,
        forces: &DVector<f64>,
    ) -> Result<()> {
        let dof = self.dof;
        self.time.push(t);
        self.qm_des.extend(qm_des.iter());
        self.qm.extend(y.rows(0, dof).iter());
        self.qm_dot.extend(y.rows(dof, dof).iter());
        self.tau.extend(tau.iter());
        self.forces.extend(forces.iter());
        if self.log_energies {
            let state = DynState {
                time: t,
                qm: y.rows(0, dof).into_owned(),
                qm_dot: y.rows(dof, dof).into_owned(),
            };
            self.energies.push(energies(robot, &state)?);
        }
        Ok(())
    }

    fn finish(self, max_abs_integral: f64) -> TrajectoryLog {
        let rows = self.time.len();
        TrajectoryLog {
            time: self.time,
            qm_des: DMatrix::from_row_slice(rows, self.dof, &self.qm_des),
            qm: DMatrix::from_row_slice(rows, self.dof, &self.qm),
            qm_dot: DMatrix::from_row_slice(rows, self.dof, &self.qm_dot),
            tau: DMatrix::from_row_slice(rows, self.dof, &self.tau),
            forces: DMatrix::from_row_slice(rows, self.force_cols, &self.forces),
            energies: self.energies,
            max_abs_integral,
        }
    }
}

/// Sensor model: manifold state reconstructed from joint-space
/// displacements. The projection is exact for consistent joint vectors, so
/// this is a pass-through that exercises the full measurement path.
fn measure(clarke: &ClarkeMatrices, robot: &RobotSpec, qm: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(qm.len());
    for i in 0..robot.segments.len() {
        let coords = robot.segment_coords(qm, i);
        let joints = clarke.manifold_to_joints(&coords);
        let back = clarke.joints_to_manifold(&joints)?;
        out[2 * i] = back.x;
        out[2 * i + 1] = back.y;
    }
    Ok(out)
}

/// Runs a closed-loop tracking experiment and returns the sampled log.
pub fn run_tracking_experiment(exp: &Experiment) -> Result<TrajectoryLog> {
    exp.validate()?;
    let robot = &exp.robot;
    let dof = robot.dof();
    let m = robot.segments.len();
    let n = robot.tendon_count;
    let clarke = ClarkeMatrices::new(n)?;
    let mut controller = Controller::new(exp.controller.clone(), dof)?;
    let mut solver = Dp45::new(exp.rtol, exp.atol)?;
    let mut log = LogBuilder::new(dof, m * n, exp.log_energies);

    let rate = exp.controller.control_rate;
    let tick_count = (exp.duration * rate).ceil() as usize;
    let eps = 1e-9 / rate;

    let mut y = DVector::zeros(2 * dof);
    y.rows_mut(0, dof).copy_from(&exp.initial.qm);
    y.rows_mut(dof, dof).copy_from(&exp.initial.qm_dot);

    let mut out_idx: usize = 0;
    let mut next_out = 0.0;
    let mut max_abs_integral: f64 = 0.0;
    let mut tau_applied = DVector::zeros(dof);
    let mut forces = DVector::zeros(m * n);

    for tick in 0..tick_count {
        let t_k = tick as f64 / rate;
        let t_next = ((tick + 1) as f64 / rate).min(exp.duration);

        let measured = measure(&clarke, robot, &y.rows(0, dof).into_owned())?;
        let qm_des = exp.trajectory.sample(t_k, dof);
        let tau_cmd = controller.step(&qm_des, &measured)?;
        max_abs_integral = max_abs_integral.max(controller.integral().amax());
        let segment_forces =
            crate::control::tendon_force_pipeline(&clarke, exp.strategy, &tau_cmd, exp.pretension)?;
        for (i, sf) in segment_forces.iter().enumerate() {
            tau_applied[2 * i] = sf.tau_applied.x;
            tau_applied[2 * i + 1] = sf.tau_applied.y;
            for j in 0..n {
                forces[i * n + j] = sf.applied[j];
            }
        }

        // Output rows on this tick boundary use the fresh torque.
        while next_out <= t_k + eps {
            let qd = exp.trajectory.sample(next_out, dof);
            log.push(robot, next_out, &qd, &y, &tau_applied, &forces)?;
            out_idx += 1;
            next_out = out_idx as f64 / exp.output_rate;
        }

        let mut rhs = |t: f64, state: &DVector<f64>| -> Result<DVector<f64>> {
            let dyn_state = DynState {
                time: t,
                qm: state.rows(0, dof).into_owned(),
                qm_dot: state.rows(dof, dof).into_owned(),
            };
            let accel = forward_accel(robot, &dyn_state, &tau_applied)?;
            let mut dy = DVector::zeros(2 * dof);
            dy.rows_mut(0, dof).copy_from(&state.rows(dof, dof));
            dy.rows_mut(dof, dof).copy_from(&accel);
            Ok(dy)
        };

        let trajectory = &exp.trajectory;
        y = solver.propagate(&mut rhs, t_k, &y, t_next, |dense| {
            // Strictly interior samples; boundary rows wait for the next
            // tick so they carry its torque.
            while next_out < t_next - eps && next_out <= dense.t_end() + eps {
                if next_out < dense.t_start() - eps {
                    break;
                }
                let t = next_out.clamp(dense.t_start(), dense.t_end());
                let yi = dense.eval(t);
                let qd = trajectory.sample(next_out, dof);
                log.push(robot, next_out, &qd, &yi, &tau_applied, &forces)?;
                out_idx += 1;
                next_out = out_idx as f64 / exp.output_rate;
            }
            Ok(())
        })?;
    }

    // Trailing rows at the final instant.
    while next_out <= exp.duration + eps {
        let qd = exp.trajectory.sample(next_out, dof);
        log.push(robot, next_out, &qd, &y, &tau_applied, &forces)?;
        out_idx += 1;
        next_out = out_idx as f64 / exp.output_rate;
    }

    Ok(log.finish(max_abs_integral))
}

/// Sampling and tolerance settings for an uncontrolled run.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveOptions {
    /// Total simulated time (s).
    pub duration: f64,
    /// Logging rate (Hz).
    pub output_rate: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Also evaluate the energy breakdown at every output row.
    pub log_energies: bool,
}

impl PassiveOptions {
    /// Defaults: 1 kHz logging, rtol 1e-6, atol 1e-9, no energy logging.
    pub fn new(duration: f64) -> Self {
        PassiveOptions {
            duration,
            output_rate: 1000.0,
            rtol: 1e-6,
            atol: 1e-9,
            log_energies: false,
        }
    }
}

/// Integrates the uncontrolled robot under a constant manifold torque
/// (zeros for a free response), sampling at `opts.output_rate`.
pub fn run_passive(
    robot: &RobotSpec,
    initial: &DynState,
    tau: &DVector<f64>,
    opts: &PassiveOptions,
) -> Result<TrajectoryLog> {
    robot.validate()?;
    robot.check_dof(&initial.qm, "run_passive")?;
    robot.check_dof(&initial.qm_dot, "run_passive")?;
    robot.check_dof(tau, "run_passive")?;
    let duration = opts.duration;
    let output_rate = opts.output_rate;
    if !(duration > 0.0 && output_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "duration and output rate must be positive, got {duration} and {output_rate}"
        )));
    }
    let dof = robot.dof();
    let n = robot.tendon_count;
    let m = robot.segments.len();
    let clarke = ClarkeMatrices::new(n)?;
    let mut forces = DVector::zeros(m * n);
    for i in 0..m {
        let tau_i = nalgebra::Vector2::new(tau[2 * i], tau[2 * i + 1]);
        let f = clarke.torque_to_forces(&tau_i);
        for j in 0..n {
            forces[i * n + j] = f[j];
        }
    }

    let mut log = LogBuilder::new(dof, m * n, opts.log_energies);
    let mut y = DVector::zeros(2 * dof);
    y.rows_mut(0, dof).copy_from(&initial.qm);
    y.rows_mut(dof, dof).copy_from(&initial.qm_dot);

    let mut rhs = |t: f64, state: &DVector<f64>| -> Result<DVector<f64>> {
        let dyn_state = DynState {
            time: t,
            qm: state.rows(0, dof).into_owned(),
            qm_dot: state.rows(dof, dof).into_owned(),
        };
        let accel = forward_accel(robot, &dyn_state, tau)?;
        let mut dy = DVector::zeros(2 * dof);
        dy.rows_mut(0, dof).copy_from(&state.rows(dof, dof));
        dy.rows_mut(dof, dof).copy_from(&accel);
        Ok(dy)
    };

    let zero_des = DVector::zeros(dof);
    let eps = 1e-9 / output_rate;
    log.push(robot, 0.0, &zero_des, &y, tau, &forces)?;
    let mut out_idx: usize = 1;
    let mut next_out = out_idx as f64 / output_rate;

    let mut solver = Dp45::new(opts.rtol, opts.atol)?;
    y = solver.propagate(&mut rhs, 0.0, &y, duration, |dense| {
        while next_out < duration - eps && next_out <= dense.t_end() + eps {
            if next_out < dense.t_start() - eps {
                break;
            }
            let t = next_out.clamp(dense.t_start(), dense.t_end());
            let yi = dense.eval(t);
            log.push(robot, next_out, &zero_des, &yi, tau, &forces)?;
            out_idx += 1;
            next_out = out_idx as f64 / output_rate;
        }
        Ok(())
    })?;

    while next_out <= duration + eps {
        log.push(robot, next_out, &zero_des, &y, tau, &forces)?;
        out_idx += 1;
        next_out = out_idx as f64 / output_rate;
    }

    Ok(log.finish(0.0))
}
