//! Clarke transform between tendon space and the two-dimensional manifold
//! coordinates of a segment, plus the conversion to arc parameters.
//!
//! For `n` tendons at angles `psi_j = 2*pi*(j-1)/n` around the backbone, the
//! forward matrix maps the `n` tendon displacements (constrained to constant
//! sum) onto the coordinates `(q_re, q_im)`; its right inverse maps back.
//! Arc parameters are the bending-plane angle `phi = atan2(q_im, q_re)` and
//! the bending angle `theta = |q| / r_d`, where `r_d` is the tendon pitch
//! radius.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::{Error, Result};

/// Below this generalized displacement magnitude (metres) a segment counts as
/// straight and the arc parameters `(phi, theta)` are not usable.
pub const STRAIGHT_THRESHOLD: f64 = 5e-6;

/// Clarke transform matrices for `n >= 3` evenly spaced tendons.
#[derive(Debug, Clone)]
pub struct ClarkeMatrices {
    n: usize,
    angles: Vec<f64>,
    forward: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl ClarkeMatrices {
    /// Builds the `2 x n` forward matrix `(2/n) * [cos psi_j; sin psi_j]` and
    /// its `n x 2` right inverse with rows `(cos psi_j, sin psi_j)`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::TendonCount(n));
        }
        let angles: Vec<f64> = (0..n)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
            .collect();
        let scale = 2.0 / n as f64;
        let forward = DMatrix::from_fn(2, n, |r, j| {
            let a = angles[j];
            scale * if r == 0 { a.cos() } else { a.sin() }
        });
        let inverse = DMatrix::from_fn(n, 2, |j, c| {
            let a = angles[j];
            if c == 0 {
                a.cos()
            } else {
                a.sin()
            }
        });
        Ok(ClarkeMatrices {
            n,
            angles,
            forward,
            inverse,
        })
    }

    /// Number of tendons `n`.
    pub fn tendon_count(&self) -> usize {
        self.n
    }

    /// Tendon placement angles `psi_j`, ascending from zero.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Placement angle of tendon `j` (zero-based).
    pub fn tendon_angle(&self, j: usize) -> f64 {
        self.angles[j]
    }

    /// Forward transform matrix, `2 x n`.
    pub fn forward(&self) -> &DMatrix<f64> {
        &self.forward
    }

    /// Right inverse of the forward transform, `n x 2`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Projects tendon displacements onto the manifold coordinates.
    pub fn joints_to_manifold(&self, q: &DVector<f64>) -> Result<Vector2<f64>> {
        self.check_len(q, "joints_to_manifold")?;
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, qj) in q.iter().enumerate() {
            re += self.forward[(0, j)] * qj;
            im += self.forward[(1, j)] * qj;
        }
        Ok(Vector2::new(re, im))
    }

    /// Reconstructs the tendon displacements of a manifold point; the result
    /// always satisfies the constant-sum constraint `sum_j q_j = 0`.
    pub fn manifold_to_joints(&self, qm: &Vector2<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |j, _| {
            self.inverse[(j, 0)] * qm.x + self.inverse[(j, 1)] * qm.y
        })
    }

    /// Distributes a manifold control torque over tendon forces,
    /// `F = (2/n) * inverse * tau`.
    pub fn torque_to_forces(&self, tau: &Vector2<f64>) -> DVector<f64> {
        let scale = 2.0 / self.n as f64;
        DVector::from_fn(self.n, |j, _| {
            scale * (self.inverse[(j, 0)] * tau.x + self.inverse[(j, 1)] * tau.y)
        })
    }

    /// Collapses tendon forces back to the manifold torque they realize,
    /// `tau = (n/2) * forward * F`. Inverse of [`Self::torque_to_forces`] and
    /// invariant to uniform force offsets `c * 1`.
    pub fn forces_to_torque(&self, forces: &DVector<f64>) -> Result<Vector2<f64>> {
        self.check_len(forces, "forces_to_torque")?;
        let scale = self.n as f64 / 2.0;
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, fj) in forces.iter().enumerate() {
            re += self.forward[(0, j)] * fj;
            im += self.forward[(1, j)] * fj;
        }
        Ok(Vector2::new(scale * re, scale * im))
    }

    fn check_len(&self, v: &DVector<f64>, context: &'static str) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.n,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

/// Arc parameters of one segment: bending-plane angle and bending angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcCoords {
    /// Bending-plane angle `phi` in radians.
    pub phi: f64,
    /// Bending angle `theta` in radians.
    pub theta: f64,
}

/// Converts manifold coordinates to arc parameters. At the straight
/// configuration this returns `phi = 0, theta = 0` (the `atan2(0, 0)`
/// convention).
pub fn manifold_to_arc(qm: &Vector2<f64>, r_d: f64) -> ArcCoords {
    ArcCoords {
        phi: qm.y.atan2(qm.x),
        theta: qm.norm() / r_d,
    }
}

/// Converts arc parameters back to manifold coordinates,
/// `q = theta * r_d * (cos phi, sin phi)`.
pub fn arc_to_manifold(arc: &ArcCoords, r_d: f64) -> Vector2<f64> {
    let rho = arc.theta * r_d;
    Vector2::new(rho * arc.phi.cos(), rho * arc.phi.sin())
}

/// Jacobian of the arc parameters of one segment with respect to its manifold
/// coordinates, together with its time derivative for a given coordinate
/// rate. Rows are ordered `(phi, theta)`.
///
/// Errors with [`Error::NearStraight`] below the straight threshold, where
/// the map is singular.
pub fn segment_arc_jacobian(
    qm: &Vector2<f64>,
    qm_dot: &Vector2<f64>,
    r_d: f64,
) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    let rho2 = qm.norm_squared();
    let rho = rho2.sqrt();
    if rho <= STRAIGHT_THRESHOLD {
        return Err(Error::NearStraight {
            rho,
            limit: STRAIGHT_THRESHOLD,
        });
    }
    let (re, im) = (qm.x, qm.y);
    let (re_dot, im_dot) = (qm_dot.x, qm_dot.y);
    let jac = Matrix2::new(
        -im / rho2,
        re / rho2,
        re / (rho * r_d),
        im / (rho * r_d),
    );
    let rho_dot = (re * re_dot + im * im_dot) / rho;
    let jac_dot = Matrix2::new(
        -im_dot / rho2 + 2.0 * im * rho_dot / (rho2 * rho),
        re_dot / rho2 - 2.0 * re * rho_dot / (rho2 * rho),
        re_dot / (rho * r_d) - re * rho_dot / (rho2 * r_d),
        im_dot / (rho * r_d) - im * rho_dot / (rho2 * r_d),
    );
    Ok((jac, jac_dot))
}

/// Block-diagonal arc Jacobian and its time derivative for a robot whose
/// segments share the pitch radius `r_d`. Blocks are ordered by segment, rows
/// `(phi_i, theta_i)`, columns `(q_re_i, q_im_i)`.
pub fn arc_jacobian(
    qm: &DVector<f64>,
    qm_dot: &DVector<f64>,
    r_d: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !qm.len().is_multiple_of(2) || qm.len() != qm_dot.len() {
        return Err(Error::DimensionMismatch {
            context: "arc_jacobian",
            expected: qm.len(),
            actual: qm_dot.len(),
        });
    }
    let dof = qm.len();
    let mut jac = DMatrix::zeros(dof, dof);
    let mut jac_dot = DMatrix::zeros(dof, dof);
    for i in 0..dof / 2 {
        let q = Vector2::new(qm[2 * i], qm[2 * i + 1]);
        let qd = Vector2::new(qm_dot[2 * i], qm_dot[2 * i + 1]);
        let (j, jd) = segment_arc_jacobian(&q, &qd, r_d)?;
        jac.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&j);
        jac_dot.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&jd);
    }
    Ok((jac, jac_dot))
}
