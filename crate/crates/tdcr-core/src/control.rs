//! Discrete-time manifold-space control and tendon force saturation.
//!
//! The controller acts directly on the manifold coordinates: a decoupled
//! PID (or PD) per coordinate produces a generalized torque, which is mapped
//! to per-tendon forces. Because tendons only pull, the raw force vector is
//! passed through a saturation strategy before being applied; `Shift` adds
//! the smallest uniform offset that makes every force non-negative, which
//! leaves the realized torque unchanged.

use nalgebra::{DVector, Vector2};
use std::str::FromStr;

use crate::clarke::ClarkeMatrices;
use crate::{Error, Result};

/// Controller structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    /// Proportional-integral-derivative with anti-windup clamping.
    Pid,
    /// Proportional-derivative; the integral path is disabled.
    Pd,
}

/// Gains and timing of the discrete controller. Gains are shared by all
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    /// Proportional gain (N/m).
    pub kp: f64,
    /// Integral gain (N/(m s)); ignored in `Pd` mode.
    pub ki: f64,
    /// Derivative gain (N s/m).
    pub kd: f64,
    /// Controller rate (Hz); the integration and force update step is
    /// `1 / control_rate`.
    pub control_rate: f64,
    /// Clamp on the magnitude of each integral-state component (N);
    /// `f64::INFINITY` disables anti-windup.
    pub antiwindup_limit: f64,
}

impl ControllerConfig {
    /// PID with the given gains at `control_rate` Hz, no anti-windup clamp.
    pub fn pid(kp: f64, ki: f64, kd: f64, control_rate: f64) -> Self {
        ControllerConfig {
            mode: ControllerMode::Pid,
            kp,
            ki,
            kd,
            control_rate,
            antiwindup_limit: f64::INFINITY,
        }
    }

    /// PD with the given gains at `control_rate` Hz.
    pub fn pd(kp: f64, kd: f64, control_rate: f64) -> Self {
        ControllerConfig {
            mode: ControllerMode::Pd,
            kp,
            ki: 0.0,
            kd,
            control_rate,
            antiwindup_limit: f64::INFINITY,
        }
    }

    /// Clamps the integral state to `limit` in magnitude per component.
    pub fn with_antiwindup(mut self, limit: f64) -> Self {
        self.antiwindup_limit = limit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "controller gains must be non-negative, got kp={} ki={} kd={}",
                self.kp, self.ki, self.kd
            )));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "control rate must be positive and finite, got {}",
                self.control_rate
            )));
        }
        if self.antiwindup_limit <= 0.0 || self.antiwindup_limit.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "anti-windup limit must be positive, got {}",
                self.antiwindup_limit
            )));
        }
        if self.mode == ControllerMode::Pd && self.ki != 0.0 {
            return Err(Error::InvalidParameter(
                "PD mode requires ki = 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// Discrete controller state: integral accumulator and previous error for
/// the backward-difference derivative.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    integral: DVector<f64>,
    prev_error: DVector<f64>,
    first_step: bool,
}

impl Controller {
    pub fn new(config: ControllerConfig, dof: usize) -> Result<Self> {
        config.validate()?;
        Ok(Controller {
            config,
            integral: DVector::zeros(dof),
            prev_error: DVector::zeros(dof),
            first_step: true,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Current integral state (already multiplied by `ki`), in force units.
    pub fn integral(&self) -> &DVector<f64> {
        &self.integral
    }

    /// Resets the integral state and derivative memory.
    pub fn reset(&mut self) {
        self.integral.fill(0.0);
        self.prev_error.fill(0.0);
        self.first_step = true;
    }

    /// One control step at the configured rate: returns the manifold-space
    /// generalized force for `desired - measured`. The derivative term uses
    /// a backward difference of the error and is zero on the first step.
    pub fn step(&mut self, desired: &DVector<f64>, measured: &DVector<f64>) -> Result<DVector<f64>> {
        let dof = self.integral.len();
        if desired.len() != dof || measured.len() != dof {
            return Err(Error::DimensionMismatch {
                context: "controller step",
                expected: dof,
                actual: if desired.len() != dof {
                    desired.len()
                } else {
                    measured.len()
                },
            });
        }
        let dt = 1.0 / self.config.control_rate;
        let error = desired - measured;
        let mut tau = self.config.kp * &error;
        if self.config.mode == ControllerMode::Pid && self.config.ki > 0.0 {
            let limit = self.config.antiwindup_limit;
            for i in 0..dof {
                let updated = self.integral[i] + self.config.ki * error[i] * dt;
                self.integral[i] = updated.clamp(-limit, limit);
            }
            tau += &self.integral;
        }
        if self.config.kd > 0.0 && !self.first_step {
            tau += self.config.kd / dt * (&error - &self.prev_error);
        }
        self.prev_error.copy_from(&error);
        self.first_step = false;
        Ok(tau)
    }
}

// ---------------------------------------------------------------------------
// Tendon force saturation.
// ---------------------------------------------------------------------------

/// How to handle negative entries of the raw tendon force vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SaturationStrategy {
    /// Apply the raw forces unchanged (idealized push-pull actuation).
    None,
    /// Clamp negative forces to zero; the realized torque changes.
    Clip,
    /// Add a uniform offset so the minimum force equals the pretension;
    /// the torque is preserved because the force map has zero-sum columns.
    #[default]
    Shift,
    /// Use only the two tendons bracketing the torque direction, solved so
    /// the torque is realized exactly with non-negative forces.
    Redistribute,
}

impl FromStr for SaturationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SaturationStrategy::None),
            "clip" => Ok(SaturationStrategy::Clip),
            "shift" => Ok(SaturationStrategy::Shift),
            "redistribute" => Ok(SaturationStrategy::Redistribute),
            other => Err(Error::InvalidParameter(format!(
                "unknown saturation strategy '{other}' (expected none|clip|shift|redistribute)"
            ))),
        }
    }
}

impl std::fmt::Display for SaturationStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SaturationStrategy::None => "none",
            SaturationStrategy::Clip => "clip",
            SaturationStrategy::Shift => "shift",
            SaturationStrategy::Redistribute => "redistribute",
        };
        f.write_str(name)
    }
}

/// Applies a saturation strategy to one segment's raw force vector.
/// `pretension` only affects `Shift`, which keeps `min(F) = pretension`.
pub fn saturate_forces(
    clarke: &ClarkeMatrices,
    strategy: SaturationStrategy,
    raw: &DVector<f64>,
    pretension: f64,
) -> Result<DVector<f64>> {
    if raw.len() != clarke.tendon_count() {
        return Err(Error::DimensionMismatch {
            context: "saturate_forces",
            expected: clarke.tendon_count(),
            actual: raw.len(),
        });
    }
    match strategy {
        SaturationStrategy::None => Ok(raw.clone()),
        SaturationStrategy::Clip => Ok(raw.map(|f| f.max(0.0))),
        SaturationStrategy::Shift => {
            let min = raw.min();
            let offset = pretension - min.min(0.0);
            Ok(raw.add_scalar(offset))
        }
        SaturationStrategy::Redistribute => {
            let tau = clarke.forces_to_torque(raw)?;
            redistribute(clarke, &tau)
        }
    }
}

/// Realizes a torque with the two tendons whose routing angles bracket the
/// torque direction. The 2x2 system has non-negative solutions by
/// construction; a torque exactly along one tendon loads only that tendon.
fn redistribute(clarke: &ClarkeMatrices, tau: &Vector2<f64>) -> Result<DVector<f64>> {
    let n = clarke.tendon_count();
    let mut forces = DVector::zeros(n);
    let magnitude = tau.norm();
    if magnitude == 0.0 {
        return Ok(forces);
    }
    let dir = tau.y.atan2(tau.x);
    let spacing = 2.0 * std::f64::consts::PI / n as f64;
    // Index of the tendon at or just below the torque direction.
    let lower = (dir.rem_euclid(2.0 * std::f64::consts::PI) / spacing).floor() as usize % n;
    let upper = (lower + 1) % n;
    let psi_a = clarke.tendon_angle(lower);
    let psi_b = clarke.tendon_angle(upper);
    // Solve [cos a, cos b; sin a, sin b] [fa; fb] = tau by Cramer's rule.
    let det = psi_a.cos() * psi_b.sin() - psi_b.cos() * psi_a.sin();
    let fa = (tau.x * psi_b.sin() - tau.y * psi_b.cos()) / det;
    let fb = (psi_a.cos() * tau.y - psi_a.sin() * tau.x) / det;
    // Angles bracket the direction, so both solutions are >= 0 up to
    // roundoff; snap tiny negatives from the boundary case.
    forces[lower] = fa.max(0.0);
    forces[upper] = fb.max(0.0);
    Ok(forces)
}

/// Raw and saturated forces of one segment, with the torque each realizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentForces {
    /// Unsaturated forces mapped straight from the commanded torque.
    pub raw: DVector<f64>,
    /// Forces after the saturation strategy.
    pub applied: DVector<f64>,
    /// Torque realized by the applied forces.
    pub tau_applied: Vector2<f64>,
}

/// Maps per-segment commanded torques to tendon forces, saturates them, and
/// reports the torque actually realized. `tau` stacks two components per
/// segment; the result has one entry per segment.
pub fn tendon_force_pipeline(
    clarke: &ClarkeMatrices,
    strategy: SaturationStrategy,
    tau: &DVector<f64>,
    pretension: f64,
) -> Result<Vec<SegmentForces>> {
    if !tau.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            context: "tendon_force_pipeline",
            expected: tau.len() + 1,
            actual: tau.len(),
        });
    }
    let mut out = Vec::with_capacity(tau.len() / 2);
    for i in 0..tau.len() / 2 {
        let tau_i = Vector2::new(tau[2 * i], tau[2 * i + 1]);
        let raw = clarke.torque_to_forces(&tau_i);
        let applied = saturate_forces(clarke, strategy, &raw, pretension)?;
        let tau_applied = clarke.forces_to_torque(&applied)?;
        out.push(SegmentForces {
            raw,
            applied,
            tau_applied,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn pid_first_step_matches_hand_computation() {
        // kp=1500, ki=1500, kd=1 at 1 kHz, constant error 1 mm:
        // tau = 1.5 + 1500*0.001*0.001 + 0 (derivative off on first step).
        let cfg = ControllerConfig::pid(1500.0, 1500.0, 1.0, 1000.0);
        let mut ctl = Controller::new(cfg, 1).unwrap();
        let tau = ctl
            .step(
                &DVector::from_vec(vec![0.001]),
                &DVector::from_vec(vec![0.0]),
            )
            .unwrap();
        assert_relative_eq!(tau[0], 1.5015, max_relative = 1e-12);
        // Second step with the same error: integral grows, derivative zero.
        let tau = ctl
            .step(
                &DVector::from_vec(vec![0.001]),
                &DVector::from_vec(vec![0.0]),
            )
            .unwrap();
        assert_relative_eq!(tau[0], 1.5030, max_relative = 1e-12);
    }

    #[test]
    fn derivative_uses_backward_difference() {
        let cfg = ControllerConfig::pid(0.0, 0.0, 2.0, 100.0);
        let mut ctl = Controller::new(cfg, 1).unwrap();
        let zero = DVector::from_vec(vec![0.0]);
        let tau = ctl.step(&DVector::from_vec(vec![0.5]), &zero).unwrap();
        assert_abs_diff_eq!(tau[0], 0.0); // first step: no history
        let tau = ctl.step(&DVector::from_vec(vec![0.7]), &zero).unwrap();
        // kd * (e - e_prev) / dt = 2 * 0.2 / 0.01
        assert_relative_eq!(tau[0], 40.0, max_relative = 1e-12);
    }

    #[test]
    fn antiwindup_clamps_the_integral_state() {
        // Constant error 1 mm with ki = 1000 at 1 kHz grows the integral by
        // 1e-3 N per step; the clamp must cap it at 1.7 N so the output
        // settles at kp*e + limit.
        let cfg = ControllerConfig::pid(1000.0, 1000.0, 0.0, 1000.0).with_antiwindup(1.7);
        let mut ctl = Controller::new(cfg, 1).unwrap();
        let des = DVector::from_vec(vec![0.001]);
        let meas = DVector::from_vec(vec![0.0]);
        let mut last = 0.0;
        for _ in 0..5000 {
            last = ctl.step(&des, &meas).unwrap()[0];
        }
        assert_relative_eq!(last, 1.0 + 1.7, max_relative = 1e-12);
        assert_relative_eq!(ctl.integral()[0], 1.7, max_relative = 1e-12);
    }

    #[test]
    fn pd_mode_has_no_integral_action() {
        let cfg = ControllerConfig::pd(1750.0, 0.55, 1000.0);
        let mut ctl = Controller::new(cfg, 1).unwrap();
        let des = DVector::from_vec(vec![0.001]);
        let meas = DVector::from_vec(vec![0.0]);
        let first = ctl.step(&des, &meas).unwrap()[0];
        let second = ctl.step(&des, &meas).unwrap()[0];
        assert_relative_eq!(first, 1.75, max_relative = 1e-12);
        assert_relative_eq!(second, 1.75, max_relative = 1e-12); // no drift
        assert_abs_diff_eq!(ctl.integral()[0], 0.0);
    }

    #[test]
    fn pd_mode_rejects_nonzero_ki() {
        let mut cfg = ControllerConfig::pd(1.0, 0.0, 100.0);
        cfg.ki = 0.5;
        assert!(Controller::new(cfg, 1).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ControllerConfig::pid(-1.0, 0.0, 0.0, 100.0).validate().is_err());
        assert!(ControllerConfig::pid(1.0, 0.0, 0.0, 0.0).validate().is_err());
        assert!(ControllerConfig::pid(1.0, 0.0, 0.0, 100.0)
            .with_antiwindup(0.0)
            .validate()
            .is_err());
    }

    fn clarke5() -> ClarkeMatrices {
        ClarkeMatrices::new(5).unwrap()
    }

    #[test]
    fn shift_restores_nonnegativity_and_preserves_torque() {
        let clarke = clarke5();
        let tau = Vector2::new(1.0, 0.0);
        let raw = clarke.torque_to_forces(&tau);
        let shifted = saturate_forces(&clarke, SaturationStrategy::Shift, &raw, 0.0).unwrap();
        let expected = [0.7236068, 0.4472136, 0.0, 0.0, 0.4472136];
        for (i, &e) in expected.iter().enumerate() {
            assert_abs_diff_eq!(shifted[i], e, epsilon = 1e-7);
        }
        let tau_back = clarke.forces_to_torque(&shifted).unwrap();
        assert_relative_eq!(tau_back.x, 1.0, max_relative = 1e-12);
        assert_abs_diff_eq!(tau_back.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shift_adds_pretension_on_top() {
        let clarke = clarke5();
        let raw = clarke.torque_to_forces(&Vector2::new(0.3, -0.2));
        let shifted = saturate_forces(&clarke, SaturationStrategy::Shift, &raw, 0.05).unwrap();
        assert_relative_eq!(shifted.min(), 0.05, max_relative = 1e-12);
    }

    #[test]
    fn clip_loses_torque_by_a_known_amount() {
        let clarke = clarke5();
        let raw = clarke.torque_to_forces(&Vector2::new(1.0, 0.0));
        let clipped = saturate_forces(&clarke, SaturationStrategy::Clip, &raw, 0.0).unwrap();
        assert!(clipped.min() >= 0.0);
        let tau_back = clarke.forces_to_torque(&clipped).unwrap();
        // Zero-mean raw forces always have negative entries, so clipping
        // genuinely realizes less torque than commanded.
        assert_relative_eq!(tau_back.x, 0.4763932022500211, max_relative = 1e-12);
        assert_abs_diff_eq!(tau_back.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn redistribute_uses_the_bracketing_pair() {
        let clarke = clarke5();
        // Torque halfway between tendons 0 (psi=0) and 1 (psi=72 deg):
        // symmetric loads sin(36 deg)/sin(72 deg) = 0.618...
        let dir = std::f64::consts::PI / 5.0;
        let tau = Vector2::new(dir.cos(), dir.sin());
        let raw = clarke.torque_to_forces(&tau);
        let forces =
            saturate_forces(&clarke, SaturationStrategy::Redistribute, &raw, 0.0).unwrap();
        assert_relative_eq!(forces[0], 0.6180339887498948, max_relative = 1e-12);
        assert_relative_eq!(forces[1], 0.6180339887498948, max_relative = 1e-12);
        for i in 2..5 {
            assert_abs_diff_eq!(forces[i], 0.0);
        }
        let tau_back = clarke.forces_to_torque(&forces).unwrap();
        assert_relative_eq!(tau_back.x, tau.x, max_relative = 1e-12);
        assert_relative_eq!(tau_back.y, tau.y, max_relative = 1e-12);
    }

    #[test]
    fn redistribute_hits_a_single_tendon_exactly() {
        let clarke = clarke5();
        let raw = clarke.torque_to_forces(&Vector2::new(0.0, 0.0));
        let forces =
            saturate_forces(&clarke, SaturationStrategy::Redistribute, &raw, 0.0).unwrap();
        assert_abs_diff_eq!(forces.norm(), 0.0);

        let psi = clarke.tendon_angle(2);
        let tau = Vector2::new(0.8 * psi.cos(), 0.8 * psi.sin());
        let raw = clarke.torque_to_forces(&tau);
        let forces =
            saturate_forces(&clarke, SaturationStrategy::Redistribute, &raw, 0.0).unwrap();
        assert_relative_eq!(forces[2], 0.8, max_relative = 1e-10);
        let others: f64 = (0..5).filter(|&i| i != 2).map(|i| forces[i].abs()).sum();
        assert_abs_diff_eq!(others, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pipeline_reports_realized_torque_per_segment() {
        let clarke = clarke5();
        let tau = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.5]);
        let segs =
            tendon_force_pipeline(&clarke, SaturationStrategy::Clip, &tau, 0.0).unwrap();
        assert_eq!(segs.len(), 2);
        assert_relative_eq!(segs[0].tau_applied.x, 0.4763932022500211, max_relative = 1e-12);
        assert!(segs[1].tau_applied.y < 0.5); // clip always loses torque
        for seg in &segs {
            assert!(seg.applied.min() >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn torque_preserving_strategies_round_trip(
            tx in -2.0f64..2.0,
            ty in -2.0f64..2.0,
            n in 3usize..9,
            pre in 0.0f64..0.5,
        ) {
            let clarke = ClarkeMatrices::new(n).unwrap();
            let tau = Vector2::new(tx, ty);
            let raw = clarke.torque_to_forces(&tau);
            for strategy in [
                SaturationStrategy::None,
                SaturationStrategy::Shift,
                SaturationStrategy::Redistribute,
            ] {
                let f = saturate_forces(&clarke, strategy, &raw, pre).unwrap();
                let back = clarke.forces_to_torque(&f).unwrap();
                prop_assert!((back - tau).norm() <= 1e-10 * tau.norm().max(1.0));
                if strategy != SaturationStrategy::None {
                    prop_assert!(f.min() >= 0.0);
                }
            }
        }

        #[test]
        fn integral_state_respects_the_clamp(
            errs in proptest::collection::vec(-0.01f64..0.01, 1..60),
            limit in 0.01f64..1.0,
        ) {
            let cfg = ControllerConfig::pid(100.0, 500.0, 0.0, 1000.0).with_antiwindup(limit);
            let mut ctl = Controller::new(cfg, 1).unwrap();
            let zero = DVector::from_vec(vec![0.0]);
            for e in errs {
                ctl.step(&DVector::from_vec(vec![e]), &zero).unwrap();
                prop_assert!(ctl.integral()[0].abs() <= limit + 1e-15);
            }
        }
    }
}
