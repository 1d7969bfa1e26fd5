//! Experiment configuration files.
//!
//! TOML with every field optional: omitted values fall back to the reference
//! prototype (two segments, five tendons, 1 kHz PID with the published
//! gains, ramped-chirp trajectory). Unknown keys are rejected so typos fail
//! loudly instead of silently running the defaults.

use serde::Deserialize;
use std::path::Path;

use nalgebra::DVector;
use tdcr_core::control::{ControllerConfig, ControllerMode, SaturationStrategy};
use tdcr_core::dynamics::DynState;
use tdcr_core::kinematics::{RobotSpec, SegmentSpec};
use tdcr_core::sim::{Experiment, StepInterval, TrajectorySpec};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    /// Total simulated time (s).
    pub duration: f64,
    /// Logging rate (Hz); defaults to the control rate.
    pub output_rate: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    /// Seed for the randomized invariant checks (`validate`).
    pub seed: u64,
    /// none | clip | shift | redistribute
    pub strategy: String,
    /// Baseline force for the shift strategy (N).
    pub pretension: f64,
    pub robot: RobotConfig,
    pub controller: ControllerSection,
    pub trajectory: TrajectorySection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            duration: 60.0,
            output_rate: None,
            rtol: 1e-6,
            atol: 1e-9,
            seed: 42,
            strategy: "shift".to_string(),
            pretension: 0.0,
            robot: RobotConfig::default(),
            controller: ControllerSection::default(),
            trajectory: TrajectorySection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    pub segment_count: usize,
    pub tendon_count: usize,
    /// Gravitational acceleration along the base -z axis (m/s^2).
    pub gravity: f64,
    /// Parameters shared by all segments.
    pub segment: SegmentSection,
    pub flags: FlagsSection,
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            segment_count: 2,
            tendon_count: 5,
            gravity: 9.81,
            segment: SegmentSection::default(),
            flags: FlagsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSection {
    pub length: f64,
    pub disk_count: usize,
    pub disk_radius: f64,
    pub disk_mass: f64,
    pub backbone_density: f64,
    pub backbone_diameter: f64,
    pub backbone_modulus: f64,
    pub damping: f64,
    pub tendon_density: f64,
    pub tendon_area: f64,
    pub tendon_modulus: f64,
    pub tendon_second_moment: f64,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let seg = SegmentSpec::default();
        SegmentSection {
            length: seg.length,
            disk_count: seg.disk_count,
            disk_radius: seg.disk_radius,
            disk_mass: seg.disk_mass,
            backbone_density: seg.backbone_density,
            backbone_diameter: seg.backbone_diameter,
            backbone_modulus: seg.backbone_modulus,
            damping: seg.damping,
            tendon_density: seg.tendon_density,
            tendon_area: seg.tendon_area,
            tendon_modulus: seg.tendon_modulus,
            tendon_second_moment: seg.tendon_second_moment,
        }
    }
}

impl SegmentSection {
    fn to_spec(&self) -> SegmentSpec {
        SegmentSpec {
            length: self.length,
            disk_count: self.disk_count,
            disk_radius: self.disk_radius,
            disk_mass: self.disk_mass,
            backbone_density: self.backbone_density,
            backbone_diameter: self.backbone_diameter,
            backbone_modulus: self.backbone_modulus,
            damping: self.damping,
            tendon_density: self.tendon_density,
            tendon_area: self.tendon_area,
            tendon_modulus: self.tendon_modulus,
            tendon_second_moment: self.tendon_second_moment,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlagsSection {
    pub rotational_energy: bool,
    pub tendon_energy: bool,
    pub coriolis: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    /// pid | pd
    pub mode: String,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub control_rate: f64,
    /// Integral clamp (N); omitted = no anti-windup.
    pub antiwindup_limit: Option<f64>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            mode: "pid".to_string(),
            kp: 1500.0,
            ki: 1500.0,
            kd: 1.0,
            control_rate: 1000.0,
            antiwindup_limit: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    /// constant | chirp | step
    pub kind: String,
    /// `constant`: held setpoint, two entries per segment.
    pub target: Option<Vec<f64>>,
    /// `chirp` fields.
    pub amplitudes: Option<Vec<f64>>,
    pub frequencies: Option<Vec<f64>>,
    pub ramp: Option<f64>,
    pub phases: Option<Vec<f64>>,
    /// `step` intervals.
    pub steps: Option<Vec<StepSection>>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection {
            kind: "chirp".to_string(),
            target: None,
            amplitudes: Some(vec![0.01, 0.005, 0.005, 0.025]),
            frequencies: Some(vec![0.1, 0.05, 0.15, 0.2]),
            ramp: Some(0.005),
            phases: None,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    pub start: f64,
    pub end: f64,
    pub target: Vec<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("config '{}' is invalid: {e}", path.display()))
        })
    }

    fn build_trajectory(&self, dof: usize) -> Result<TrajectorySpec, CliError> {
        let t = &self.trajectory;
        let spec = match t.kind.as_str() {
            "constant" => {
                let target = t.target.clone().ok_or_else(|| {
                    CliError::Config("trajectory kind 'constant' needs 'target'".to_string())
                })?;
                TrajectorySpec::Constant(DVector::from_vec(target))
            }
            "chirp" => {
                let amplitudes = t.amplitudes.clone().ok_or_else(|| {
                    CliError::Config("trajectory kind 'chirp' needs 'amplitudes'".to_string())
                })?;
                let frequencies = t.frequencies.clone().ok_or_else(|| {
                    CliError::Config("trajectory kind 'chirp' needs 'frequencies'".to_string())
                })?;
                let ramp = t.ramp.unwrap_or(0.0);
                let phases = t.phases.clone().unwrap_or_else(|| vec![0.0; amplitudes.len()]);
                TrajectorySpec::Chirp {
                    amplitudes,
                    frequencies,
                    ramp,
                    phases,
                }
            }
            "step" => {
                let steps = t.steps.clone().ok_or_else(|| {
                    CliError::Config("trajectory kind 'step' needs 'steps'".to_string())
                })?;
                TrajectorySpec::StepSequence(
                    steps
                        .into_iter()
                        .map(|s| StepInterval {
                            start: s.start,
                            end: s.end,
                            target: DVector::from_vec(s.target),
                        })
                        .collect(),
                )
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown trajectory kind '{other}' (expected constant|chirp|step)"
                )))
            }
        };
        spec.validate(dof)
            .map_err(|e| CliError::Config(format!("trajectory: {e}")))?;
        Ok(spec)
    }

    pub fn build_robot(&self) -> Result<RobotSpec, CliError> {
        let mut robot = RobotSpec::uniform(self.robot.segment_count, self.robot.tendon_count);
        let seg = self.robot.segment.to_spec();
        for s in &mut robot.segments {
            *s = seg.clone();
        }
        robot.gravity = self.robot.gravity;
        robot.flags.rotational_energy = self.robot.flags.rotational_energy;
        robot.flags.tendon_energy = self.robot.flags.tendon_energy;
        robot.flags.coriolis = self.robot.flags.coriolis;
        robot
            .validate()
            .map_err(|e| CliError::Config(format!("robot: {e}")))?;
        Ok(robot)
    }

    fn build_controller(&self) -> Result<ControllerConfig, CliError> {
        let c = &self.controller;
        let mode = match c.mode.as_str() {
            "pid" => ControllerMode::Pid,
            "pd" => ControllerMode::Pd,
            other => {
                return Err(CliError::Config(format!(
                    "unknown controller mode '{other}' (expected pid|pd)"
                )))
            }
        };
        let config = ControllerConfig {
            mode,
            kp: c.kp,
            ki: if mode == ControllerMode::Pd { 0.0 } else { c.ki },
            kd: c.kd,
            control_rate: c.control_rate,
            antiwindup_limit: c.antiwindup_limit.unwrap_or(f64::INFINITY),
        };
        config
            .validate()
            .map_err(|e| CliError::Config(format!("controller: {e}")))?;
        Ok(config)
    }

    pub fn strategy(&self) -> Result<SaturationStrategy, CliError> {
        self.strategy
            .parse()
            .map_err(|e| CliError::Config(format!("strategy: {e}")))
    }

    /// Assembles the full experiment, applying validation at each layer.
    pub fn build_experiment(&self) -> Result<Experiment, CliError> {
        let robot = self.build_robot()?;
        let dof = robot.dof();
        let controller = self.build_controller()?;
        let trajectory = self.build_trajectory(dof)?;
        let strategy = self.strategy()?;
        let exp = Experiment {
            output_rate: self.output_rate.unwrap_or(controller.control_rate),
            strategy,
            pretension: self.pretension,
            rtol: self.rtol,
            atol: self.atol,
            initial: DynState::rest(dof),
            log_energies: false,
            ..Experiment::new(robot, controller, trajectory, self.duration)
        };
        exp.validate()
            .map_err(|e| CliError::Config(format!("experiment: {e}")))?;
        Ok(exp)
    }
}
