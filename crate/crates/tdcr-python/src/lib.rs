//! Python bindings for the tendon-driven continuum robot library.
//!
//! Build the extension module with
//!
//! ```text
//! cargo build --release -p tdcr-python --features extension-module
//! ```
//!
//! and rename the resulting `libtdcr.so` to `tdcr.so` somewhere on the
//! Python path (`python/smoke_test.py` automates this). Vectors and
//! matrices cross the boundary as plain lists / lists of rows, so the
//! module has no Python-side dependencies.

use nalgebra::{DMatrix, DVector, Vector2};
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tdcr_core::clarke::ClarkeMatrices;
use tdcr_core::control::{self, ControllerConfig, SaturationStrategy};
use tdcr_core::dynamics::{self, DynState, EnergyBreakdown};
use tdcr_core::kinematics::{forward_kinematics, RobotSpec};
use tdcr_core::sim::{run_tracking_experiment, Experiment, StepInterval, TrajectoryLog, TrajectorySpec};

fn err(e: tdcr_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dvec(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn parse_strategy(s: &str) -> PyResult<SaturationStrategy> {
    s.parse().map_err(err)
}

fn energy_dict<'py>(py: Python<'py>, e: &EnergyBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("backbone_trans", e.backbone_trans)?;
    d.set_item("backbone_rot", e.backbone_rot)?;
    d.set_item("tendon_path_trans", e.tendon_path_trans)?;
    d.set_item("tendon_path_rot", e.tendon_path_rot)?;
    d.set_item("tendon_displacement", e.tendon_displacement)?;
    d.set_item("disk_trans", e.disk_trans)?;
    d.set_item("disk_rot", e.disk_rot)?;
    d.set_item("gravity_backbone", e.gravity_backbone)?;
    d.set_item("gravity_tendons", e.gravity_tendons)?;
    d.set_item("gravity_disks", e.gravity_disks)?;
    d.set_item("elastic_backbone", e.elastic_backbone)?;
    d.set_item("kinetic_total", e.kinetic_total)?;
    d.set_item("potential_total", e.potential_total)?;
    Ok(d)
}

/// Clarke transform for `n >= 3` evenly spaced tendons.
#[pyclass(frozen)]
struct ClarkeTransform {
    inner: ClarkeMatrices,
}

#[pymethods]
impl ClarkeTransform {
    #[new]
    fn new(tendon_count: usize) -> PyResult<Self> {
        Ok(ClarkeTransform {
            inner: ClarkeMatrices::new(tendon_count).map_err(err)?,
        })
    }

    #[getter]
    fn tendon_count(&self) -> usize {
        self.inner.tendon_count()
    }

    /// Placement angle of tendon `j` (zero-based) in radians.
    fn tendon_angle(&self, j: usize) -> PyResult<f64> {
        if j >= self.inner.tendon_count() {
            return Err(PyIndexError::new_err(format!(
                "tendon index {j} out of range for {} tendons",
                self.inner.tendon_count()
            )));
        }
        Ok(self.inner.tendon_angle(j))
    }

    /// Forward transform as a `2 x n` list of rows.
    fn forward(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.forward())
    }

    /// Inverse transform as an `n x 2` list of rows.
    fn inverse(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.inverse())
    }

    /// Projects `n` tendon displacements onto the manifold.
    fn joints_to_manifold(&self, q: Vec<f64>) -> PyResult<(f64, f64)> {
        let qm = self.inner.joints_to_manifold(&dvec(q)).map_err(err)?;
        Ok((qm.x, qm.y))
    }

    /// Reconstructs the `n` tendon displacements of a manifold point.
    fn manifold_to_joints(&self, q_re: f64, q_im: f64) -> Vec<f64> {
        to_vec(&self.inner.manifold_to_joints(&Vector2::new(q_re, q_im)))
    }

    /// Tendon forces realizing a manifold torque (minimum-norm solution).
    fn torque_to_forces(&self, tau_re: f64, tau_im: f64) -> Vec<f64> {
        to_vec(&self.inner.torque_to_forces(&Vector2::new(tau_re, tau_im)))
    }

    /// Manifold torque produced by `n` tendon forces.
    fn forces_to_torque(&self, forces: Vec<f64>) -> PyResult<(f64, f64)> {
        let tau = self.inner.forces_to_torque(&dvec(forces)).map_err(err)?;
        Ok((tau.x, tau.y))
    }
}

/// A serial chain of identical constant-curvature segments.
#[pyclass]
struct Robot {
    inner: RobotSpec,
}

impl Robot {
    fn state(&self, qm: Vec<f64>, qm_dot: Vec<f64>) -> DynState {
        DynState::new(dvec(qm), dvec(qm_dot))
    }

    fn rest_state(&self, qm: Vec<f64>) -> DynState {
        let dof = qm.len();
        DynState::new(dvec(qm), DVector::zeros(dof))
    }
}

#[pymethods]
impl Robot {
    #[new]
    #[pyo3(signature = (segments=1, tendons=5))]
    fn new(segments: usize, tendons: usize) -> PyResult<Self> {
        let inner = RobotSpec::uniform(segments, tendons);
        inner.validate().map_err(err)?;
        Ok(Robot { inner })
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof()
    }

    #[getter]
    fn segment_count(&self) -> usize {
        self.inner.segment_count()
    }

    #[getter]
    fn tendon_count(&self) -> usize {
        self.inner.tendon_count
    }

    #[getter]
    fn gravity(&self) -> f64 {
        self.inner.gravity
    }

    #[setter]
    fn set_gravity(&mut self, g: f64) -> PyResult<()> {
        self.inner.gravity = g;
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn rotational_energy(&self) -> bool {
        self.inner.flags.rotational_energy
    }

    #[setter]
    fn set_rotational_energy(&mut self, on: bool) {
        self.inner.flags.rotational_energy = on;
    }

    #[getter]
    fn tendon_energy(&self) -> bool {
        self.inner.flags.tendon_energy
    }

    #[setter]
    fn set_tendon_energy(&mut self, on: bool) {
        self.inner.flags.tendon_energy = on;
    }

    #[getter]
    fn coriolis(&self) -> bool {
        self.inner.flags.coriolis
    }

    #[setter]
    fn set_coriolis(&mut self, on: bool) {
        self.inner.flags.coriolis = on;
    }

    /// Overrides physical parameters on every segment; unset arguments keep
    /// their current values.
    #[pyo3(signature = (*, length=None, disk_count=None, disk_radius=None, disk_mass=None,
                        backbone_density=None, backbone_diameter=None, backbone_modulus=None,
                        damping=None, tendon_density=None, tendon_area=None,
                        tendon_modulus=None, tendon_second_moment=None))]
    #[allow(clippy::too_many_arguments)]
    fn set_segment(
        &mut self,
        length: Option<f64>,
        disk_count: Option<usize>,
        disk_radius: Option<f64>,
        disk_mass: Option<f64>,
        backbone_density: Option<f64>,
        backbone_diameter: Option<f64>,
        backbone_modulus: Option<f64>,
        damping: Option<f64>,
        tendon_density: Option<f64>,
        tendon_area: Option<f64>,
        tendon_modulus: Option<f64>,
        tendon_second_moment: Option<f64>,
    ) -> PyResult<()> {
        for seg in &mut self.inner.segments {
            if let Some(v) = length {
                seg.length = v;
            }
            if let Some(v) = disk_count {
                seg.disk_count = v;
            }
            if let Some(v) = disk_radius {
                seg.disk_radius = v;
            }
            if let Some(v) = disk_mass {
                seg.disk_mass = v;
            }
            if let Some(v) = backbone_density {
                seg.backbone_density = v;
            }
            if let Some(v) = backbone_diameter {
                seg.backbone_diameter = v;
            }
            if let Some(v) = backbone_modulus {
                seg.backbone_modulus = v;
            }
            if let Some(v) = damping {
                seg.damping = v;
            }
            if let Some(v) = tendon_density {
                seg.tendon_density = v;
            }
            if let Some(v) = tendon_area {
                seg.tendon_area = v;
            }
            if let Some(v) = tendon_modulus {
                seg.tendon_modulus = v;
            }
            if let Some(v) = tendon_second_moment {
                seg.tendon_second_moment = v;
            }
        }
        self.inner.validate().map_err(err)
    }

    /// Manifold mass matrix `M(q)` as a `2m x 2m` list of rows.
    fn mass_matrix(&self, qm: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let terms = dynamics::manifold_terms(&self.inner, &self.rest_state(qm)).map_err(err)?;
        Ok(to_rows(&terms.mass))
    }

    /// Gravity vector `g(q)`.
    fn gravity_vector(&self, qm: Vec<f64>) -> PyResult<Vec<f64>> {
        let terms = dynamics::manifold_terms(&self.inner, &self.rest_state(qm)).map_err(err)?;
        Ok(to_vec(&terms.gravity))
    }

    /// Constant manifold stiffness matrix `K`.
    fn stiffness_matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        let dof = self.inner.dof();
        let terms = dynamics::manifold_terms(&self.inner, &DynState::rest(dof)).map_err(err)?;
        Ok(to_rows(&terms.stiffness))
    }

    /// Constant manifold damping matrix `D`.
    fn damping_matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        let dof = self.inner.dof();
        let terms = dynamics::manifold_terms(&self.inner, &DynState::rest(dof)).map_err(err)?;
        Ok(to_rows(&terms.damping))
    }

    /// Coriolis/centrifugal matrix `C(q, q_dot)` (computed regardless of the
    /// `coriolis` flag).
    fn coriolis_matrix(&self, qm: Vec<f64>, qm_dot: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let mut robot = self.inner.clone();
        robot.flags.coriolis = true;
        let terms = dynamics::manifold_terms(&robot, &self.state(qm, qm_dot)).map_err(err)?;
        Ok(to_rows(&terms.coriolis.expect("coriolis requested")))
    }

    /// Solves the equations of motion for the coordinate accelerations.
    fn forward_accel(&self, qm: Vec<f64>, qm_dot: Vec<f64>, tau: Vec<f64>) -> PyResult<Vec<f64>> {
        let accel =
            dynamics::forward_accel(&self.inner, &self.state(qm, qm_dot), &dvec(tau)).map_err(err)?;
        Ok(to_vec(&accel))
    }

    /// Energy breakdown of a state as a dict (keys match the `energies`
    /// CSV columns).
    fn energies<'py>(
        &self,
        py: Python<'py>,
        qm: Vec<f64>,
        qm_dot: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let e = dynamics::energies(&self.inner, &self.state(qm, qm_dot)).map_err(err)?;
        energy_dict(py, &e)
    }

    /// World position of the backbone point at arc length `s` of segment
    /// `segment_index`.
    fn backbone_point(&self, qm: Vec<f64>, segment_index: usize, s: f64) -> PyResult<(f64, f64, f64)> {
        let frame = forward_kinematics(&self.inner, &dvec(qm), segment_index, s).map_err(err)?;
        Ok((frame.position.x, frame.position.y, frame.position.z))
    }

    /// World position of the robot tip.
    fn tip_position(&self, qm: Vec<f64>) -> PyResult<(f64, f64, f64)> {
        let last = self.inner.segment_count() - 1;
        let s = self.inner.segments[last].length;
        self.backbone_point(qm, last, s)
    }
}

/// Discrete PID/PD controller acting componentwise on the manifold.
#[pyclass]
struct Controller {
    inner: control::Controller,
}

#[pymethods]
impl Controller {
    #[new]
    #[pyo3(signature = (kp, ki, kd, control_rate, dof=2, mode="pid", antiwindup_limit=None))]
    fn new(
        kp: f64,
        ki: f64,
        kd: f64,
        control_rate: f64,
        dof: usize,
        mode: &str,
        antiwindup_limit: Option<f64>,
    ) -> PyResult<Self> {
        let mut config = match mode {
            "pid" => ControllerConfig::pid(kp, ki, kd, control_rate),
            "pd" => ControllerConfig::pd(kp, kd, control_rate),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown controller mode '{other}' (expected pid|pd)"
                )))
            }
        };
        if let Some(limit) = antiwindup_limit {
            config = config.with_antiwindup(limit);
        }
        Ok(Controller {
            inner: control::Controller::new(config, dof).map_err(err)?,
        })
    }

    #[getter]
    fn kp(&self) -> f64 {
        self.inner.config().kp
    }

    #[getter]
    fn ki(&self) -> f64 {
        self.inner.config().ki
    }

    #[getter]
    fn kd(&self) -> f64 {
        self.inner.config().kd
    }

    #[getter]
    fn control_rate(&self) -> f64 {
        self.inner.config().control_rate
    }

    #[getter]
    fn integral(&self) -> Vec<f64> {
        to_vec(self.inner.integral())
    }

    /// One control tick: returns the commanded manifold torque.
    fn step(&mut self, desired: Vec<f64>, measured: Vec<f64>) -> PyResult<Vec<f64>> {
        let tau = self.inner.step(&dvec(desired), &dvec(measured)).map_err(err)?;
        Ok(to_vec(&tau))
    }

    /// Clears the integral and derivative memory.
    fn reset(&mut self) {
        self.inner.reset();
    }
}

/// Reference trajectory on the manifold.
#[pyclass(frozen)]
struct Trajectory {
    inner: TrajectorySpec,
}

#[pymethods]
impl Trajectory {
    /// Hold a fixed target.
    #[staticmethod]
    fn constant(target: Vec<f64>) -> Self {
        Trajectory {
            inner: TrajectorySpec::Constant(dvec(target)),
        }
    }

    /// Per-channel chirp `a sin(2 pi (f0 + ramp t) t + phase)`.
    #[staticmethod]
    #[pyo3(signature = (amplitudes, frequencies, ramp=0.0, phases=None))]
    fn chirp(amplitudes: Vec<f64>, frequencies: Vec<f64>, ramp: f64, phases: Option<Vec<f64>>) -> Self {
        let phases = phases.unwrap_or_else(|| vec![0.0; amplitudes.len()]);
        Trajectory {
            inner: TrajectorySpec::Chirp {
                amplitudes,
                frequencies,
                ramp,
                phases,
            },
        }
    }

    /// Piecewise-constant targets given as `(start, end, target)` intervals.
    #[staticmethod]
    fn steps(steps: Vec<(f64, f64, Vec<f64>)>) -> Self {
        Trajectory {
            inner: TrajectorySpec::StepSequence(
                steps
                    .into_iter()
                    .map(|(start, end, target)| StepInterval {
                        start,
                        end,
                        target: dvec(target),
                    })
                    .collect(),
            ),
        }
    }

    /// Desired coordinates at time `t` for a robot with `dof` coordinates.
    fn sample(&self, t: f64, dof: usize) -> PyResult<Vec<f64>> {
        self.inner.validate(dof).map_err(err)?;
        Ok(to_vec(&self.inner.sample(t, dof)))
    }
}

/// Uniformly sampled closed-loop trajectory produced by `simulate_tracking`.
#[pyclass(frozen)]
struct TrackingResult {
    inner: TrajectoryLog,
}

#[pymethods]
impl TrackingResult {
    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn time(&self) -> Vec<f64> {
        self.inner.time.clone()
    }

    /// Largest magnitude the controller integral reached (anti-windup probe).
    #[getter]
    fn max_abs_integral(&self) -> f64 {
        self.inner.max_abs_integral
    }

    /// Desired coordinates, one row per sample.
    fn qm_des(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.qm_des)
    }

    /// Measured coordinates, one row per sample.
    fn qm(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.qm)
    }

    /// Coordinate velocities, one row per sample.
    fn qm_dot(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.qm_dot)
    }

    /// Realized manifold torques, one row per sample.
    fn tau(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.tau)
    }

    /// Applied tendon forces (segment-major), one row per sample.
    fn forces(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.forces)
    }

    /// Per-channel root-mean-square tracking error.
    fn rmse(&self) -> Vec<f64> {
        to_vec(&self.inner.rmse())
    }

    /// Energy breakdown per sample (empty unless requested).
    fn energies<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.energies.iter().map(|e| energy_dict(py, e)).collect()
    }
}

/// Runs a closed-loop tracking simulation and returns the sampled log.
#[pyfunction]
#[pyo3(signature = (robot, controller, trajectory, duration, strategy="shift", pretension=0.0,
                    output_rate=None, rtol=1e-6, atol=1e-9, log_energies=false))]
#[allow(clippy::too_many_arguments)]
fn simulate_tracking(
    robot: &Robot,
    controller: &Controller,
    trajectory: &Trajectory,
    duration: f64,
    strategy: &str,
    pretension: f64,
    output_rate: Option<f64>,
    rtol: f64,
    atol: f64,
    log_energies: bool,
) -> PyResult<TrackingResult> {
    let mut exp = Experiment::new(
        robot.inner.clone(),
        controller.inner.config().clone(),
        trajectory.inner.clone(),
        duration,
    );
    exp.strategy = parse_strategy(strategy)?;
    exp.pretension = pretension;
    if let Some(rate) = output_rate {
        exp.output_rate = rate;
    }
    exp.rtol = rtol;
    exp.atol = atol;
    exp.log_energies = log_energies;
    exp.validate().map_err(err)?;
    Ok(TrackingResult {
        inner: run_tracking_experiment(&exp).map_err(err)?,
    })
}

/// Applies a saturation strategy (`none|clip|shift|redistribute`) to one
/// segment's tendon forces.
#[pyfunction]
#[pyo3(signature = (forces, strategy, pretension=0.0))]
fn saturate_forces(forces: Vec<f64>, strategy: &str, pretension: f64) -> PyResult<Vec<f64>> {
    let clarke = ClarkeMatrices::new(forces.len()).map_err(err)?;
    let strategy = parse_strategy(strategy)?;
    let out = control::saturate_forces(&clarke, strategy, &dvec(forces), pretension).map_err(err)?;
    Ok(to_vec(&out))
}

/// Runs the library's deterministic invariant suite; returns
/// `(name, passed, detail)` per check.
#[pyfunction]
#[pyo3(signature = (seed=42))]
fn run_checks(seed: u64) -> Vec<(String, bool, String)> {
    tdcr_core::checks::run_all(seed)
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn tdcr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ClarkeTransform>()?;
    m.add_class::<Robot>()?;
    m.add_class::<Controller>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<TrackingResult>()?;
    m.add_function(wrap_pyfunction!(simulate_tracking, m)?)?;
    m.add_function(wrap_pyfunction!(saturate_forces, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    Ok(())
}
