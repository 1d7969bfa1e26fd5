//! Euler-Lagrange terms of the robot on the manifold, plus the arc-space
//! formulation used as an independent cross-check.
//!
//! The generalized mass matrix and gravity gradient are assembled from the
//! distributed backbone mass (32-point Gauss-Legendre per segment), the
//! spacer disks, and optionally tendon inertia. On the manifold the elastic
//! and damping terms are exactly constant block-diagonal matrices
//! `k_theta / r_d^2 * I2` and `d_theta / r_d^2 * I2` per segment; the
//! Coriolis matrix (off by default, negligible for the reference prototype)
//! is built from Christoffel symbols with finite-differenced mass-matrix
//! derivatives.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use std::sync::OnceLock;

use crate::clarke::STRAIGHT_THRESHOLD;
use crate::kinematics::{
    chain_bases, fill_angular_jacobian, fill_point_jacobian, ArcChart, Chart, ManifoldChart,
    RobotSpec, SegmentSpec,
};
use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Number of Gauss-Legendre nodes per segment for backbone integrals.
pub const BACKBONE_QUAD_POINTS: usize = 32;

fn quad_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(BACKBONE_QUAD_POINTS))
}

/// Generalized state of the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct DynState {
    /// Simulation time (s).
    pub time: f64,
    /// Stacked manifold coordinates, two per segment (m).
    pub qm: DVector<f64>,
    /// Coordinate rates (m/s).
    pub qm_dot: DVector<f64>,
}

impl DynState {
    /// State at time zero.
    pub fn new(qm: DVector<f64>, qm_dot: DVector<f64>) -> Self {
        DynState {
            time: 0.0,
            qm,
            qm_dot,
        }
    }

    /// Straight robot at rest.
    pub fn rest(dof: usize) -> Self {
        DynState::new(DVector::zeros(dof), DVector::zeros(dof))
    }
}

/// Energy components of a state. All components are always evaluated; the
/// `kinetic_total` / `potential_total` sums honor the robot's model flags.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    /// Translational kinetic energy of the backbone (J).
    pub backbone_trans: f64,
    /// Rotational kinetic energy of the backbone cross-sections (J).
    pub backbone_rot: f64,
    /// Translational kinetic energy of tendons following the backbone (J).
    pub tendon_path_trans: f64,
    /// Rotational kinetic energy of tendon cross-sections (J).
    pub tendon_path_rot: f64,
    /// Kinetic energy of tendon material moving through the actuation path (J).
    pub tendon_displacement: f64,
    /// Translational kinetic energy of the spacer disks (J).
    pub disk_trans: f64,
    /// Rotational kinetic energy of the spacer disks (J).
    pub disk_rot: f64,
    /// Gravitational potential of the backbone (J).
    pub gravity_backbone: f64,
    /// Gravitational potential of the tendons (J).
    pub gravity_tendons: f64,
    /// Gravitational potential of the disks (J).
    pub gravity_disks: f64,
    /// Elastic bending energy of backbone plus tendons (J).
    pub elastic_backbone: f64,
    /// Total kinetic energy of the enabled model terms (J).
    pub kinetic_total: f64,
    /// Total potential energy of the enabled model terms (J).
    pub potential_total: f64,
}

/// Terms of `M qm'' + C qm' + g + K qm + D qm' = tau` in manifold
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldTerms {
    /// Generalized mass matrix, symmetric positive definite.
    pub mass: DMatrix<f64>,
    /// Coriolis/centrifugal matrix; `None` unless the robot enables it.
    pub coriolis: Option<DMatrix<f64>>,
    /// Gravity gradient `dU_g/dqm`.
    pub gravity: DVector<f64>,
    /// Constant block-diagonal stiffness.
    pub stiffness: DMatrix<f64>,
    /// Constant block-diagonal damping.
    pub damping: DMatrix<f64>,
}

/// The same terms expressed in arc parameters `(phi_i, theta_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcTerms {
    pub mass: DMatrix<f64>,
    pub coriolis: Option<DMatrix<f64>>,
    pub gravity: DVector<f64>,
    /// Elastic field: `stiffness * a` is the elastic generalized force.
    pub stiffness: DMatrix<f64>,
    /// Configuration-dependent damping `diag(d_theta * theta^2, d_theta)`.
    pub damping: DMatrix<f64>,
}

// ---------------------------------------------------------------------------
// Mass / gravity assembly, generic over the coordinate chart.
// ---------------------------------------------------------------------------

/// Inertia contributions per unit backbone length for one segment.
struct LineInertia {
    /// Mass per length entering translational terms (kg/m).
    trans: f64,
    /// Body-frame rotational inertia per length, diagonal (kg m).
    rot: Option<Vector3<f64>>,
}

fn line_inertia(robot: &RobotSpec, seg_index: usize) -> LineInertia {
    let seg = &robot.segments[seg_index];
    let mut trans = seg.backbone_density * seg.backbone_area();
    let bend = seg.backbone_bending_moment();
    let mut rot_xx = seg.backbone_density * bend;
    let mut rot_zz = seg.backbone_density * 2.0 * bend;
    if robot.flags.tendon_energy {
        // Tendons of this and every more distal segment run through here.
        let mult = (robot.tendon_count * (robot.segments.len() - seg_index)) as f64;
        trans += mult * seg.tendon_density * seg.tendon_area;
        rot_xx += mult * seg.tendon_density * seg.tendon_second_moment;
        rot_zz += mult * seg.tendon_density * 2.0 * seg.tendon_second_moment;
    }
    LineInertia {
        trans,
        rot: robot
            .flags
            .rotational_energy
            .then(|| Vector3::new(rot_xx, rot_xx, rot_zz)),
    }
}

/// Body-frame inertia tensor diagonal of one spacer disk (kg m^2).
fn disk_inertia(seg: &SegmentSpec) -> Vector3<f64> {
    let i_xx = seg.disk_mass * seg.disk_radius * seg.disk_radius / 4.0;
    Vector3::new(i_xx, i_xx, 2.0 * i_xx)
}

/// Rank-one style symmetric update `mass += w * J^T J` over the first
/// `active` columns, upper triangle only.
fn add_point_mass(mass: &mut DMatrix<f64>, jac: &DMatrix<f64>, w: f64, active: usize) {
    for r in 0..active {
        for c in r..active {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += jac[(k, r)] * jac[(k, c)];
            }
            mass[(r, c)] += w * acc;
        }
    }
}

/// Same with an anisotropic diagonal weight on the three rows.
fn add_rot_mass(mass: &mut DMatrix<f64>, jac: &DMatrix<f64>, diag: &Vector3<f64>, active: usize) {
    for r in 0..active {
        for c in r..active {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += diag[k] * jac[(k, r)] * jac[(k, c)];
            }
            mass[(r, c)] += acc;
        }
    }
}

/// Cumulative tendon displacement of tendon `k` of segment `i` and its
/// gradient row over the chart coordinates (non-zero for segments `j <= i`).
fn tendon_displacement_row<C: Chart>(
    chart: &C,
    robot: &RobotSpec,
    coords: &DVector<f64>,
    seg_index: usize,
    cos_psi: f64,
    sin_psi: f64,
    row: &mut DVector<f64>,
) -> f64 {
    row.fill(0.0);
    let mut q = 0.0;
    for j in 0..=seg_index {
        let c = Vector2::new(coords[2 * j], coords[2 * j + 1]);
        let (qm, dqm) = chart.manifold_of(&robot.segments[j], c);
        q += cos_psi * qm.x + sin_psi * qm.y;
        row[2 * j] = cos_psi * dqm[(0, 0)] + sin_psi * dqm[(1, 0)];
        row[2 * j + 1] = cos_psi * dqm[(0, 1)] + sin_psi * dqm[(1, 1)];
    }
    q
}

fn assemble_mass_gravity<C: Chart>(
    chart: &C,
    robot: &RobotSpec,
    coords: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let dof = robot.dof();
    let mut mass = DMatrix::zeros(dof, dof);
    let mut gravity = DVector::zeros(dof);
    let bases = chain_bases(chart, robot, coords);
    let mut jac = DMatrix::zeros(3, dof);
    let mut wjac = DMatrix::zeros(3, dof);
    let rule = quad_rule();
    let with_rot = robot.flags.rotational_energy;

    for (i, seg) in robot.segments.iter().enumerate() {
        let active = 2 * (i + 1);
        let base = &bases[i];
        let c = Vector2::new(coords[2 * i], coords[2 * i + 1]);
        let line = line_inertia(robot, i);

        for (s, w) in rule.mapped(0.0, seg.length) {
            let lp = chart.local_point(seg, c, s, with_rot);
            fill_point_jacobian(&mut jac, base, &lp, i);
            add_point_mass(&mut mass, &jac, w * line.trans, active);
            if robot.gravity != 0.0 {
                let gw = w * line.trans * robot.gravity;
                for col in 0..active {
                    gravity[col] += gw * jac[(2, col)];
                }
            }
            if let Some(rot_diag) = &line.rot {
                fill_angular_jacobian(&mut wjac, base, &lp, i);
                add_rot_mass(&mut mass, &wjac, &(rot_diag * w), active);
            }
        }

        let spacing = seg.disk_spacing();
        let d_inertia = disk_inertia(seg);
        for o in 1..=seg.disk_count {
            let s = o as f64 * spacing;
            let lp = chart.local_point(seg, c, s, with_rot);
            fill_point_jacobian(&mut jac, base, &lp, i);
            add_point_mass(&mut mass, &jac, seg.disk_mass, active);
            if robot.gravity != 0.0 {
                let gw = seg.disk_mass * robot.gravity;
                for col in 0..active {
                    gravity[col] += gw * jac[(2, col)];
                }
            }
            if robot.flags.rotational_energy {
                fill_angular_jacobian(&mut wjac, base, &lp, i);
                add_rot_mass(&mut mass, &wjac, &d_inertia, active);
            }
        }

        if robot.flags.tendon_energy && seg.tendon_density * seg.tendon_area > 0.0 {
            let mut row = DVector::zeros(dof);
            for k in 0..robot.tendon_count {
                let psi = 2.0 * std::f64::consts::PI * k as f64 / robot.tendon_count as f64;
                let q = tendon_displacement_row(
                    chart,
                    robot,
                    coords,
                    i,
                    psi.cos(),
                    psi.sin(),
                    &mut row,
                );
                let coeff = seg.tendon_density * seg.tendon_area * (seg.length + q);
                for r in 0..active {
                    for cc in r..active {
                        mass[(r, cc)] += coeff * row[r] * row[cc];
                    }
                }
            }
        }
    }

    // Mirror the accumulated upper triangle.
    for r in 0..dof {
        for cc in 0..r {
            mass[(r, cc)] = mass[(cc, r)];
        }
    }
    (mass, gravity)
}

fn coordinate_fd_step(coords: &DVector<f64>, index: usize) -> f64 {
    let seg = index / 2;
    let pair = Vector2::new(coords[2 * seg], coords[2 * seg + 1]).norm();
    (1e-6 * pair).max(1e-7)
}

/// Coriolis matrix from Christoffel symbols, with `dM/dq` by central finite
/// differences (step `max(1e-7, 1e-6 |q_i|)` per segment pair).
fn coriolis_fd<C: Chart>(
    chart: &C,
    robot: &RobotSpec,
    coords: &DVector<f64>,
    coords_dot: &DVector<f64>,
) -> DMatrix<f64> {
    let dof = robot.dof();
    let mut partials = Vec::with_capacity(dof);
    for i in 0..dof {
        let h = coordinate_fd_step(coords, i);
        let mut plus = coords.clone();
        let mut minus = coords.clone();
        plus[i] += h;
        minus[i] -= h;
        let (mp, _) = assemble_mass_gravity(chart, robot, &plus);
        let (mm, _) = assemble_mass_gravity(chart, robot, &minus);
        partials.push((mp - mm) / (2.0 * h));
    }
    let mut cor = DMatrix::zeros(dof, dof);
    for k in 0..dof {
        for j in 0..dof {
            let mut acc = 0.0;
            for i in 0..dof {
                acc += 0.5
                    * (partials[i][(k, j)] + partials[j][(k, i)] - partials[k][(i, j)])
                    * coords_dot[i];
            }
            cor[(k, j)] = acc;
        }
    }
    cor
}

fn block_diagonal(robot: &RobotSpec, block_of: impl Fn(&SegmentSpec) -> (f64, f64)) -> DMatrix<f64> {
    let dof = robot.dof();
    let mut m = DMatrix::zeros(dof, dof);
    for (i, seg) in robot.segments.iter().enumerate() {
        let (a, b) = block_of(seg);
        m[(2 * i, 2 * i)] = a;
        m[(2 * i + 1, 2 * i + 1)] = b;
    }
    m
}

// ---------------------------------------------------------------------------
// Public operations.
// ---------------------------------------------------------------------------

/// Assembles the manifold-space model terms at a state.
pub fn manifold_terms(robot: &RobotSpec, state: &DynState) -> Result<ManifoldTerms> {
    robot.validate()?;
    robot.check_dof(&state.qm, "manifold_terms")?;
    robot.check_dof(&state.qm_dot, "manifold_terms")?;
    let (mass, gravity) = assemble_mass_gravity(&ManifoldChart, robot, &state.qm);
    let coriolis = robot
        .flags
        .coriolis
        .then(|| coriolis_fd(&ManifoldChart, robot, &state.qm, &state.qm_dot));
    let n = robot.tendon_count;
    let stiffness = block_diagonal(robot, |seg| {
        let k = seg.bending_stiffness(n) / (seg.disk_radius * seg.disk_radius);
        (k, k)
    });
    let damping = block_diagonal(robot, |seg| {
        let d = seg.damping / (seg.disk_radius * seg.disk_radius);
        (d, d)
    });
    Ok(ManifoldTerms {
        mass,
        coriolis,
        gravity,
        stiffness,
        damping,
    })
}

/// Solves the equations of motion for the coordinate accelerations under a
/// manifold torque `tau`.
pub fn forward_accel(robot: &RobotSpec, state: &DynState, tau: &DVector<f64>) -> Result<DVector<f64>> {
    robot.check_dof(tau, "forward_accel")?;
    let terms = manifold_terms(robot, state)?;
    let mut rhs = tau - &terms.gravity;
    rhs -= &terms.stiffness * &state.qm;
    rhs -= &terms.damping * &state.qm_dot;
    if let Some(cor) = &terms.coriolis {
        rhs -= cor * &state.qm_dot;
    }
    let chol = terms
        .mass
        .cholesky()
        .ok_or(Error::MassMatrixNotSpd { time: state.time })?;
    let accel = chol.solve(&rhs);
    if accel.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "forward_accel",
            time: state.time,
        });
    }
    Ok(accel)
}

/// Arc-space model terms at arc coordinates `a = (phi_1, theta_1, ...)`.
/// The classic formulation: singular at straight segments, used to
/// cross-validate the manifold path.
pub fn arc_space_terms(
    robot: &RobotSpec,
    arc: &DVector<f64>,
    arc_dot: &DVector<f64>,
) -> Result<ArcTerms> {
    robot.validate()?;
    robot.check_dof(arc, "arc_space_terms")?;
    robot.check_dof(arc_dot, "arc_space_terms")?;
    for (i, seg) in robot.segments.iter().enumerate() {
        let rho = arc[2 * i + 1] * seg.disk_radius;
        if rho.abs() <= STRAIGHT_THRESHOLD {
            return Err(Error::NearStraight {
                rho,
                limit: STRAIGHT_THRESHOLD,
            });
        }
    }
    let (mass, gravity) = assemble_mass_gravity(&ArcChart, robot, arc);
    let coriolis = robot
        .flags
        .coriolis
        .then(|| coriolis_fd(&ArcChart, robot, arc, arc_dot));
    let n = robot.tendon_count;
    let stiffness = block_diagonal(robot, |seg| (0.0, seg.bending_stiffness(n)));
    let mut damping = DMatrix::zeros(robot.dof(), robot.dof());
    for (i, seg) in robot.segments.iter().enumerate() {
        let theta = arc[2 * i + 1];
        damping[(2 * i, 2 * i)] = seg.damping * theta * theta;
        damping[(2 * i + 1, 2 * i + 1)] = seg.damping;
    }
    Ok(ArcTerms {
        mass,
        coriolis,
        gravity,
        stiffness,
        damping,
    })
}

/// Evaluates every energy component at a state. Totals include only the
/// terms enabled by the robot's model flags (mixed tendon/rotational terms
/// need both).
pub fn energies(robot: &RobotSpec, state: &DynState) -> Result<EnergyBreakdown> {
    robot.validate()?;
    robot.check_dof(&state.qm, "energies")?;
    robot.check_dof(&state.qm_dot, "energies")?;
    let dof = robot.dof();
    let bases = chain_bases(&ManifoldChart, robot, &state.qm);
    let rule = quad_rule();
    let mut jac = DMatrix::zeros(3, dof);
    let mut wjac = DMatrix::zeros(3, dof);
    let mut e = EnergyBreakdown::default();
    let g = robot.gravity;
    let m_total = robot.segments.len();

    for (i, seg) in robot.segments.iter().enumerate() {
        let base = &bases[i];
        let c = Vector2::new(state.qm[2 * i], state.qm[2 * i + 1]);
        let rho_line = seg.backbone_density * seg.backbone_area();
        let bend = seg.backbone_bending_moment();
        let rot_line = Vector3::new(
            seg.backbone_density * bend,
            seg.backbone_density * bend,
            seg.backbone_density * 2.0 * bend,
        );
        let tendon_mult = (robot.tendon_count * (m_total - i)) as f64;
        let tendon_line = tendon_mult * seg.tendon_density * seg.tendon_area;
        let tendon_rot = Vector3::new(
            tendon_mult * seg.tendon_density * seg.tendon_second_moment,
            tendon_mult * seg.tendon_density * seg.tendon_second_moment,
            tendon_mult * seg.tendon_density * 2.0 * seg.tendon_second_moment,
        );

        for (s, w) in rule.mapped(0.0, seg.length) {
            let lp = ManifoldChart.local_point(seg, c, s, true);
            fill_point_jacobian(&mut jac, base, &lp, i);
            fill_angular_jacobian(&mut wjac, base, &lp, i);
            let active = 2 * (i + 1);
            let mut v = Vector3::<f64>::zeros();
            let mut omega = Vector3::<f64>::zeros();
            for col in 0..active {
                let qd = state.qm_dot[col];
                for r in 0..3 {
                    v[r] += jac[(r, col)] * qd;
                    omega[r] += wjac[(r, col)] * qd;
                }
            }
            let z = base.pos.z + (base.rot * lp.pos).z;
            e.backbone_trans += 0.5 * w * rho_line * v.norm_squared();
            e.backbone_rot += 0.5
                * w
                * (rot_line.x * omega.x * omega.x
                    + rot_line.y * omega.y * omega.y
                    + rot_line.z * omega.z * omega.z);
            e.gravity_backbone += w * rho_line * g * z;
            e.tendon_path_trans += 0.5 * w * tendon_line * v.norm_squared();
            e.tendon_path_rot += 0.5
                * w
                * (tendon_rot.x * omega.x * omega.x
                    + tendon_rot.y * omega.y * omega.y
                    + tendon_rot.z * omega.z * omega.z);
            e.gravity_tendons += w * tendon_line * g * z;
        }

        let spacing = seg.disk_spacing();
        let d_inertia = disk_inertia(seg);
        for o in 1..=seg.disk_count {
            let s = o as f64 * spacing;
            let lp = ManifoldChart.local_point(seg, c, s, true);
            fill_point_jacobian(&mut jac, base, &lp, i);
            fill_angular_jacobian(&mut wjac, base, &lp, i);
            let active = 2 * (i + 1);
            let mut v = Vector3::<f64>::zeros();
            let mut omega = Vector3::<f64>::zeros();
            for col in 0..active {
                let qd = state.qm_dot[col];
                for r in 0..3 {
                    v[r] += jac[(r, col)] * qd;
                    omega[r] += wjac[(r, col)] * qd;
                }
            }
            let z = base.pos.z + (base.rot * lp.pos).z;
            e.disk_trans += 0.5 * seg.disk_mass * v.norm_squared();
            e.disk_rot += 0.5
                * (d_inertia.x * omega.x * omega.x
                    + d_inertia.y * omega.y * omega.y
                    + d_inertia.z * omega.z * omega.z);
            e.gravity_disks += seg.disk_mass * g * z;
        }

        // Tendon material moving through the actuation path.
        if seg.tendon_density * seg.tendon_area > 0.0 {
            let mut row = DVector::zeros(dof);
            for k in 0..robot.tendon_count {
                let psi = 2.0 * std::f64::consts::PI * k as f64 / robot.tendon_count as f64;
                let q = tendon_displacement_row(
                    &ManifoldChart,
                    robot,
                    &state.qm,
                    i,
                    psi.cos(),
                    psi.sin(),
                    &mut row,
                );
                let q_dot = row.dot(&state.qm_dot);
                e.tendon_displacement +=
                    0.5 * seg.tendon_density * seg.tendon_area * (seg.length + q) * q_dot * q_dot;
            }
        }

        // Elastic bending energy, smooth in the manifold coordinates:
        // theta^2 = |q|^2 / r_d^2.
        let theta2 = c.norm_squared() / (seg.disk_radius * seg.disk_radius);
        e.elastic_backbone += 0.5 * seg.bending_stiffness(robot.tendon_count) * theta2;
    }

    e.kinetic_total = e.backbone_trans + e.disk_trans;
    e.potential_total = e.gravity_backbone + e.gravity_disks + e.elastic_backbone;
    if robot.flags.rotational_energy {
        e.kinetic_total += e.backbone_rot + e.disk_rot;
    }
    if robot.flags.tendon_energy {
        e.kinetic_total += e.tendon_path_trans + e.tendon_displacement;
        e.potential_total += e.gravity_tendons;
        if robot.flags.rotational_energy {
            e.kinetic_total += e.tendon_path_rot;
        }
    }
    Ok(e)
}
