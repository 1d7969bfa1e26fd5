//! Self-contained invariant suite: fast, deterministic spot checks of the
//! library's core identities, runnable from the command line to vet a build.

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clarke::{self, ClarkeMatrices};
use crate::control::{saturate_forces, SaturationStrategy};
use crate::dynamics::{energies, manifold_terms, arc_space_terms, DynState};
use crate::kinematics::{forward_kinematics, point_jacobian, RobotSpec};
use crate::ode::integrate_dp45;
use crate::Result;

/// Outcome of one invariant check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed metric against its limit.
    pub detail: String,
}

impl CheckResult {
    fn from_metric(name: &'static str, worst: f64, limit: f64) -> Self {
        CheckResult {
            name,
            passed: worst <= limit,
            detail: format!("worst {worst:.3e} (limit {limit:.1e})"),
        }
    }
}

fn random_config(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    let mut qm = DVector::zeros(2 * m);
    for i in 0..m {
        let rho: f64 = rng.random_range(1e-3..0.02);
        let phi: f64 = rng.random_range(-3.0..3.0);
        qm[2 * i] = rho * phi.cos();
        qm[2 * i + 1] = rho * phi.sin();
    }
    qm
}

fn clarke_identity() -> CheckResult {
    let mut worst: f64 = 0.0;
    for n in 3..=12 {
        let clarke = ClarkeMatrices::new(n).unwrap();
        let prod = clarke.forward() * clarke.inverse();
        worst = worst.max((prod - nalgebra::Matrix2::identity()).norm());
    }
    CheckResult::from_metric("clarke inverse identity", worst, 1e-12)
}

fn manifold_round_trip(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(3..=10);
        let clarke = ClarkeMatrices::new(n).unwrap();
        let qm = Vector2::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
        let joints = clarke.manifold_to_joints(&qm);
        let back = clarke.joints_to_manifold(&joints).unwrap();
        worst = worst.max((back - qm).norm() / qm.norm().max(1e-12));
    }
    CheckResult::from_metric("manifold round trip", worst, 1e-12)
}

fn torque_round_trip(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1e995);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(3..=10);
        let clarke = ClarkeMatrices::new(n).unwrap();
        let tau = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let forces = clarke.torque_to_forces(&tau);
        let back = clarke.forces_to_torque(&forces).unwrap();
        worst = worst.max((back - tau).norm() / tau.norm().max(1e-12));
    }
    CheckResult::from_metric("torque round trip", worst, 1e-12)
}

fn rotation_orthonormality(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b9);
    let robot = RobotSpec::uniform(2, 5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let qm = random_config(&mut rng, 2);
        let s: f64 = rng.random_range(0.0..robot.segments[1].length);
        let frame = forward_kinematics(&robot, &qm, 1, s).unwrap();
        let err = (frame.rotation.transpose() * frame.rotation
            - nalgebra::Matrix3::identity())
        .norm();
        worst = worst.max(err);
        worst = worst.max((frame.rotation.determinant() - 1.0).abs());
    }
    CheckResult::from_metric("rotation orthonormality", worst, 1e-10)
}

fn jacobian_consistency(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdeadbeef);
    let robot = RobotSpec::uniform(2, 5);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let qm = random_config(&mut rng, 2);
        let s: f64 = rng.random_range(0.01..robot.segments[1].length);
        let jac = point_jacobian(&robot, &qm, 1, s).unwrap();
        let h = 1e-7;
        for col in 0..4 {
            let mut plus = qm.clone();
            let mut minus = qm.clone();
            plus[col] += h;
            minus[col] -= h;
            let fp = forward_kinematics(&robot, &plus, 1, s).unwrap().position;
            let fm = forward_kinematics(&robot, &minus, 1, s).unwrap().position;
            let fd = (fp - fm) / (2.0 * h);
            let err = (jac.column(col) - fd).norm() / fd.norm().max(1e-6);
            worst = worst.max(err);
        }
    }
    CheckResult::from_metric("point jacobian vs finite differences", worst, 1e-5)
}

fn two_path_dynamics(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234567);
    let robot = RobotSpec::uniform(2, 5);
    let r_d = robot.segments[0].disk_radius;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let qm = random_config(&mut rng, 2);
        let qd = DVector::from_fn(4, |_, _| rng.random_range(-0.3..0.3));
        let terms = manifold_terms(&robot, &DynState::new(qm.clone(), qd.clone())).unwrap();
        let mut arc = DVector::zeros(4);
        for i in 0..2 {
            let a = clarke::manifold_to_arc(&robot.segment_coords(&qm, i), r_d);
            arc[2 * i] = a.phi;
            arc[2 * i + 1] = a.theta;
        }
        let (jac, _) = clarke::arc_jacobian(&qm, &qd, r_d).unwrap();
        let arc_dot = &jac * &qd;
        let at = arc_space_terms(&robot, &arc, &arc_dot).unwrap();
        let mass_via_arc = jac.transpose() * &at.mass * &jac;
        worst = worst.max((&terms.mass - &mass_via_arc).norm() / terms.mass.norm());
    }
    CheckResult::from_metric("manifold vs arc mass matrix", worst, 1e-8)
}

fn mass_spd(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let robot = RobotSpec::uniform(2, 5);
    let mut failures = 0usize;
    for _ in 0..100 {
        let qm = random_config(&mut rng, 2);
        let terms = manifold_terms(&robot, &DynState::new(qm, DVector::zeros(4))).unwrap();
        if terms.mass.cholesky().is_none() {
            failures += 1;
        }
    }
    CheckResult {
        name: "mass matrix positive definite",
        passed: failures == 0,
        detail: format!("{failures} failures out of 100 samples"),
    }
}

fn saturation_preserves_torque(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77777);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(3..=8);
        let clarke = ClarkeMatrices::new(n).unwrap();
        let tau = Vector2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let raw = clarke.torque_to_forces(&tau);
        for strategy in [SaturationStrategy::Shift, SaturationStrategy::Redistribute] {
            let f = saturate_forces(&clarke, strategy, &raw, 0.1).unwrap();
            if f.min() < 0.0 {
                return CheckResult {
                    name: "saturation preserves torque",
                    passed: false,
                    detail: format!("negative force from {strategy}"),
                };
            }
            let back = clarke.forces_to_torque(&f).unwrap();
            worst = worst.max((back - tau).norm() / tau.norm().max(1e-9));
        }
    }
    CheckResult::from_metric("saturation preserves torque", worst, 1e-10)
}

fn kinetic_energy_consistency(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3141592);
    let mut robot = RobotSpec::uniform(2, 5);
    robot.flags.rotational_energy = true;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let qm = random_config(&mut rng, 2);
        let qd = DVector::from_fn(4, |_, _| rng.random_range(-0.3..0.3));
        let state = DynState::new(qm, qd);
        let e = energies(&robot, &state).unwrap();
        let terms = manifold_terms(&robot, &state).unwrap();
        let quad = 0.5 * state.qm_dot.dot(&(&terms.mass * &state.qm_dot));
        worst = worst.max((e.kinetic_total - quad).abs() / quad.max(1e-15));
    }
    CheckResult::from_metric("kinetic energy vs mass quadratic form", worst, 1e-10)
}

fn integrator_accuracy() -> CheckResult {
    let y0 = DVector::from_vec(vec![1.0]);
    let mut f = |_t: f64, y: &DVector<f64>| -> Result<DVector<f64>> { Ok(-y) };
    let y1 = integrate_dp45(&mut f, 0.0, &y0, 1.0, 1e-10, 1e-13).unwrap();
    let err = (y1[0] - (-1.0f64).exp()).abs();
    CheckResult::from_metric("integrator accuracy on exp decay", err, 1e-9)
}

fn straight_configuration_continuity() -> CheckResult {
    let robot = RobotSpec::uniform(1, 5);
    let m0 = manifold_terms(&robot, &DynState::rest(2)).unwrap().mass;
    let mut worst: f64 = 0.0;
    for k in 0..8 {
        let phi = k as f64;
        let qm = DVector::from_vec(vec![1e-5 * phi.cos(), 1e-5 * phi.sin()]);
        let m = manifold_terms(&robot, &DynState::new(qm, DVector::zeros(2)))
            .unwrap()
            .mass;
        worst = worst.max((&m - &m0).norm() / m0.norm());
    }
    CheckResult::from_metric("mass matrix continuity at straight", worst, 1e-6)
}

/// Runs the whole suite with a seed for the randomized checks.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        clarke_identity(),
        manifold_round_trip(seed),
        torque_round_trip(seed),
        rotation_orthonormality(seed),
        jacobian_consistency(seed),
        two_path_dynamics(seed),
        mass_spd(seed),
        saturation_preserves_torque(seed),
        kinetic_energy_consistency(seed),
        integrator_accuracy(),
        straight_configuration_continuity(),
    ]
}
