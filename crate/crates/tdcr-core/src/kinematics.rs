//! Robot description and constant-curvature kinematics.
//!
//! Each segment bends into a circular arc of angle `theta = |q| / r_d` in the
//! plane `phi = atan2(q_im, q_re)`. All maps here are evaluated directly in
//! the manifold coordinates `(q_re, q_im)` through even power-series bases,
//! so positions, rotations and their derivatives stay smooth through the
//! straight configuration instead of hitting the `1/theta` singularity of the
//! classic arc-parameter formulas.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::{Error, Result};

/// Geometric and material description of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpec {
    /// Backbone arc length of the segment (m).
    pub length: f64,
    /// Number of spacer disks, evenly spaced with the last at the tip.
    pub disk_count: usize,
    /// Disk radius = tendon pitch radius `r_d` (m).
    pub disk_radius: f64,
    /// Mass of one spacer disk (kg).
    pub disk_mass: f64,
    /// Backbone material density (kg/m^3).
    pub backbone_density: f64,
    /// Backbone rod diameter (m).
    pub backbone_diameter: f64,
    /// Backbone Young's modulus (Pa).
    pub backbone_modulus: f64,
    /// Arc-space damping coefficient `d_theta` (N m s).
    pub damping: f64,
    /// Tendon material density (kg/m^3); zero disables tendon inertia.
    pub tendon_density: f64,
    /// Tendon cross-section area (m^2).
    pub tendon_area: f64,
    /// Tendon Young's modulus (Pa).
    pub tendon_modulus: f64,
    /// Tendon cross-section bending second moment (m^4).
    pub tendon_second_moment: f64,
}

impl Default for SegmentSpec {
    /// Reference prototype segment: 0.2 m NiTi rod of 1 mm diameter with ten
    /// 7 mm spacer disks of 0.81 g each.
    fn default() -> Self {
        SegmentSpec {
            length: 0.2,
            disk_count: 10,
            disk_radius: 7e-3,
            disk_mass: 0.81e-3,
            backbone_density: 6400.0,
            backbone_diameter: 1e-3,
            backbone_modulus: 58e6,
            damping: 11.27e-4,
            tendon_density: 0.0,
            tendon_area: 0.0,
            tendon_modulus: 0.0,
            tendon_second_moment: 0.0,
        }
    }
}

impl SegmentSpec {
    /// Backbone cross-section area.
    pub fn backbone_area(&self) -> f64 {
        std::f64::consts::PI * self.backbone_diameter.powi(2) / 4.0
    }

    /// Backbone bending second moment of area, `pi d^4 / 64`.
    pub fn backbone_bending_moment(&self) -> f64 {
        std::f64::consts::PI * self.backbone_diameter.powi(4) / 64.0
    }

    /// Combined bending stiffness `k_theta` of backbone plus `n` tendons,
    /// per unit bending angle (N m).
    pub fn bending_stiffness(&self, tendon_count: usize) -> f64 {
        (self.backbone_modulus * self.backbone_bending_moment()
            + tendon_count as f64 * self.tendon_modulus * self.tendon_second_moment)
            / self.length
    }

    /// Spacing between consecutive disks.
    pub fn disk_spacing(&self) -> f64 {
        self.length / self.disk_count as f64
    }

    fn validate(&self, index: usize) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "segment {index}: {what}"
                )))
            }
        };
        check(self.length > 0.0, "length must be positive")?;
        check(self.disk_count >= 1, "disk count must be at least 1")?;
        check(self.disk_radius > 0.0, "disk radius must be positive")?;
        check(self.disk_mass >= 0.0, "disk mass must be non-negative")?;
        check(
            self.backbone_density >= 0.0,
            "backbone density must be non-negative",
        )?;
        check(
            self.backbone_diameter > 0.0,
            "backbone diameter must be positive",
        )?;
        check(
            self.backbone_modulus >= 0.0,
            "backbone modulus must be non-negative",
        )?;
        check(self.damping >= 0.0, "damping must be non-negative")?;
        check(
            self.tendon_density >= 0.0 && self.tendon_area >= 0.0,
            "tendon density and area must be non-negative",
        )?;
        check(
            self.tendon_modulus >= 0.0 && self.tendon_second_moment >= 0.0,
            "tendon modulus and second moment must be non-negative",
        )?;
        Ok(())
    }
}

/// Switches for model terms that are negligible for the reference prototype
/// but kept available for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelFlags {
    /// Include rotational kinetic energy of backbone, tendons and disks.
    pub rotational_energy: bool,
    /// Include tendon kinetic and gravitational terms.
    pub tendon_energy: bool,
    /// Include the Coriolis/centrifugal matrix in the equations of motion.
    pub coriolis: bool,
}

/// A serial-chain robot of constant-curvature segments sharing one tendon
/// layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    /// Segments from base to tip.
    pub segments: Vec<SegmentSpec>,
    /// Number of tendons per segment, evenly spaced (`n >= 3`).
    pub tendon_count: usize,
    /// Gravitational acceleration magnitude along `-z` of the base frame
    /// (m/s^2).
    pub gravity: f64,
    /// Optional model terms.
    pub flags: ModelFlags,
}

impl Default for RobotSpec {
    fn default() -> Self {
        RobotSpec::uniform(1, 5)
    }
}

impl RobotSpec {
    /// A robot of `m` identical default segments with `n` tendons each.
    pub fn uniform(m: usize, n: usize) -> Self {
        RobotSpec {
            segments: vec![SegmentSpec::default(); m],
            tendon_count: n,
            gravity: 9.81,
            flags: ModelFlags::default(),
        }
    }

    /// Generalized-coordinate count, two per segment.
    pub fn dof(&self) -> usize {
        2 * self.segments.len()
    }

    /// Number of segments.
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Checks parameter ranges and the tendon count.
    pub fn validate(&self) -> Result<()> {
        if self.tendon_count < 3 {
            return Err(Error::TendonCount(self.tendon_count));
        }
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter(
                "robot needs at least one segment".into(),
            ));
        }
        if !self.gravity.is_finite() || self.gravity < 0.0 {
            return Err(Error::InvalidParameter(
                "gravity must be finite and non-negative".into(),
            ));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            seg.validate(i)?;
        }
        Ok(())
    }

    /// The `(q_re, q_im)` pair of segment `i` out of a stacked coordinate
    /// vector.
    pub fn segment_coords(&self, qm: &DVector<f64>, i: usize) -> Vector2<f64> {
        Vector2::new(qm[2 * i], qm[2 * i + 1])
    }

    pub(crate) fn check_dof(&self, v: &DVector<f64>, context: &'static str) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dof(),
                actual: v.len(),
            });
        }
        Ok(())
    }

    fn check_segment(&self, index: usize) -> Result<()> {
        if index >= self.segments.len() {
            return Err(Error::SegmentIndexOutOfRange {
                index,
                count: self.segments.len(),
            });
        }
        Ok(())
    }
}

/// Pose of a backbone cross-section: rotation and position relative to the
/// robot base frame (or the segment base frame for single-segment queries).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Right-handed orthonormal rotation matrix.
    pub rotation: Matrix3<f64>,
    /// Position (m).
    pub position: Vector3<f64>,
}

impl Frame {
    /// Identity pose.
    pub fn identity() -> Self {
        Frame {
            rotation: Matrix3::identity(),
            position: Vector3::zeros(),
        }
    }
}

// ---------------------------------------------------------------------------
// Smooth even basis functions.
//
// With x = kappa * s the arc formulas reduce to products of polynomials in
// (q_re, q_im) and the even analytic functions below, written as functions of
// y = x^2 so that differentiation never divides by |q|:
//   g1(y) = (1 - cos x) / x^2      g1' = h1 / 2
//   g2(y) = sin x / x              g2' = h2 / 2
//   h1(y) = (x sin x - 2 (1 - cos x)) / x^4
//   h2(y) = (x cos x - sin x) / x^3
//   cos x = 1 - y * g1(y),         (cos x)' = -g2 / 2
// ---------------------------------------------------------------------------

/// Crossover between power series and closed trig forms; at `y = 1e-2` both
/// sides agree to ~1e-14 relative.
const SERIES_SWITCH: f64 = 1e-2;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ArcBasis {
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
    pub h2: f64,
    pub cos_x: f64,
}

pub(crate) fn arc_basis(y: f64) -> ArcBasis {
    debug_assert!(y >= 0.0);
    if y < SERIES_SWITCH {
        ArcBasis {
            g1: 0.5 - y / 24.0 + y * y / 720.0 - y * y * y / 40_320.0,
            g2: 1.0 - y / 6.0 + y * y / 120.0 - y * y * y / 5_040.0,
            h1: -1.0 / 12.0 + y / 180.0 - y * y / 6_720.0 + y * y * y / 453_600.0,
            h2: -1.0 / 3.0 + y / 30.0 - y * y / 840.0 + y * y * y / 45_360.0,
            cos_x: 1.0 - y / 2.0 + y * y / 24.0 - y * y * y / 720.0,
        }
    } else {
        let x = y.sqrt();
        let (sin_x, cos_x) = x.sin_cos();
        ArcBasis {
            g1: (1.0 - cos_x) / y,
            g2: sin_x / x,
            h1: (x * sin_x - 2.0 * (1.0 - cos_x)) / (y * y),
            h2: (x * cos_x - sin_x) / (y * x),
            cos_x,
        }
    }
}

// ---------------------------------------------------------------------------
// Local (segment-frame) geometry with partials, in either coordinate chart.
// ---------------------------------------------------------------------------

/// Position and rotation of the cross-section at arc length `s`, with their
/// partial derivatives with respect to the segment's two chart coordinates.
#[derive(Debug, Clone)]
pub(crate) struct LocalPoint {
    pub pos: Vector3<f64>,
    pub dpos: Matrix3x2<f64>,
    pub rot: Option<(Matrix3<f64>, [Matrix3<f64>; 2])>,
}

/// A coordinate chart for one segment: manifold coordinates `(q_re, q_im)`
/// or arc parameters `(phi, theta)`. Both yield the same backbone curve;
/// partials are with respect to the chart's own coordinates.
pub(crate) trait Chart {
    fn local_point(
        &self,
        seg: &SegmentSpec,
        coords: Vector2<f64>,
        s: f64,
        with_rot: bool,
    ) -> LocalPoint;

    /// Manifold coordinates at a chart point, with their Jacobian with
    /// respect to the chart coordinates (columns in chart order).
    fn manifold_of(&self, seg: &SegmentSpec, coords: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>);
}

/// Chart in `(q_re, q_im)`: smooth everywhere including straight segments.
pub(crate) struct ManifoldChart;

impl Chart for ManifoldChart {
    fn local_point(
        &self,
        seg: &SegmentSpec,
        coords: Vector2<f64>,
        s: f64,
        with_rot: bool,
    ) -> LocalPoint {
        let (re, im) = (coords.x, coords.y);
        let sigma = s / (seg.disk_radius * seg.length);
        let sigma2 = sigma * sigma;
        let y = sigma2 * (re * re + im * im);
        let b = arc_basis(y);
        let c_p = s * s / (seg.disk_radius * seg.length);

        let pos = Vector3::new(c_p * b.g1 * re, c_p * b.g1 * im, s * b.g2);
        let dpos = Matrix3x2::new(
            c_p * (b.g1 + sigma2 * b.h1 * re * re),
            c_p * sigma2 * b.h1 * re * im,
            c_p * sigma2 * b.h1 * re * im,
            c_p * (b.g1 + sigma2 * b.h1 * im * im),
            s * sigma2 * b.h2 * re,
            s * sigma2 * b.h2 * im,
        );

        let rot = with_rot.then(|| {
            let s1 = sigma;
            let s2 = sigma2;
            let rot = Matrix3::new(
                1.0 - s2 * b.g1 * re * re,
                -s2 * b.g1 * re * im,
                s1 * b.g2 * re,
                -s2 * b.g1 * re * im,
                1.0 - s2 * b.g1 * im * im,
                s1 * b.g2 * im,
                -s1 * b.g2 * re,
                -s1 * b.g2 * im,
                b.cos_x,
            );
            let d_re = Matrix3::new(
                -s2 * re * (s2 * b.h1 * re * re + 2.0 * b.g1),
                -s2 * im * (s2 * b.h1 * re * re + b.g1),
                s1 * (s2 * b.h2 * re * re + b.g2),
                -s2 * im * (s2 * b.h1 * re * re + b.g1),
                -s2 * s2 * b.h1 * re * im * im,
                s1 * s2 * b.h2 * re * im,
                -s1 * (s2 * b.h2 * re * re + b.g2),
                -s1 * s2 * b.h2 * re * im,
                -s2 * b.g2 * re,
            );
            let d_im = Matrix3::new(
                -s2 * s2 * b.h1 * im * re * re,
                -s2 * re * (s2 * b.h1 * im * im + b.g1),
                s1 * s2 * b.h2 * im * re,
                -s2 * re * (s2 * b.h1 * im * im + b.g1),
                -s2 * im * (s2 * b.h1 * im * im + 2.0 * b.g1),
                s1 * (s2 * b.h2 * im * im + b.g2),
                -s1 * s2 * b.h2 * re * im,
                -s1 * (s2 * b.h2 * im * im + b.g2),
                -s2 * b.g2 * im,
            );
            (rot, [d_re, d_im])
        });

        LocalPoint { pos, dpos, rot }
    }

    fn manifold_of(&self, _seg: &SegmentSpec, coords: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        (coords, Matrix2::identity())
    }
}

/// Chart in `(phi, theta)`: classic arc-parameter formulas, singular at
/// `theta = 0`. Used as the independent cross-check path for the dynamics.
pub(crate) struct ArcChart;

impl Chart for ArcChart {
    fn local_point(
        &self,
        seg: &SegmentSpec,
        coords: Vector2<f64>,
        s: f64,
        with_rot: bool,
    ) -> LocalPoint {
        let (phi, theta) = (coords.x, coords.y);
        let ell = seg.length;
        let s_hat = s / ell;
        let x = theta * s_hat;
        let (sin_x, cos_x) = x.sin_cos();
        let (sin_p, cos_p) = phi.sin_cos();

        let w = (1.0 - cos_x) * ell / theta;
        let v = sin_x * ell / theta;
        let w_theta = ell * (s_hat * sin_x * theta - (1.0 - cos_x)) / (theta * theta);
        let v_theta = ell * (s_hat * cos_x * theta - sin_x) / (theta * theta);

        let pos = Vector3::new(cos_p * w, sin_p * w, v);
        let dpos = Matrix3x2::new(
            -sin_p * w,
            cos_p * w_theta,
            cos_p * w,
            sin_p * w_theta,
            0.0,
            v_theta,
        );

        let rot = with_rot.then(|| {
            // Rotation by x about the in-plane axis u = (-sin phi, cos phi, 0).
            let u_cross = Matrix3::new(
                0.0, 0.0, cos_p, //
                0.0, 0.0, sin_p, //
                -cos_p, -sin_p, 0.0,
            );
            let u_outer = Matrix3::new(
                sin_p * sin_p - 1.0,
                -sin_p * cos_p,
                0.0,
                -sin_p * cos_p,
                cos_p * cos_p - 1.0,
                0.0,
                0.0,
                0.0,
                -1.0,
            );
            let rot = Matrix3::identity() + u_cross * sin_x + u_outer * (1.0 - cos_x);

            let du_cross = Matrix3::new(
                0.0, 0.0, -sin_p, //
                0.0, 0.0, cos_p, //
                sin_p, -cos_p, 0.0,
            );
            let du_outer = Matrix3::new(
                2.0 * sin_p * cos_p,
                sin_p * sin_p - cos_p * cos_p,
                0.0,
                sin_p * sin_p - cos_p * cos_p,
                -2.0 * sin_p * cos_p,
                0.0,
                0.0,
                0.0,
                0.0,
            );
            let d_phi = du_cross * sin_x + du_outer * (1.0 - cos_x);
            let d_theta = u_cross * (s_hat * cos_x) + u_outer * (s_hat * sin_x);
            (rot, [d_phi, d_theta])
        });

        LocalPoint { pos, dpos, rot }
    }

    fn manifold_of(&self, seg: &SegmentSpec, coords: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        let (phi, theta) = (coords.x, coords.y);
        let (sin_p, cos_p) = phi.sin_cos();
        let r_d = seg.disk_radius;
        let qm = Vector2::new(theta * r_d * cos_p, theta * r_d * sin_p);
        let jac = Matrix2::new(
            -theta * r_d * sin_p,
            r_d * cos_p,
            theta * r_d * cos_p,
            r_d * sin_p,
        );
        (qm, jac)
    }
}

// ---------------------------------------------------------------------------
// Chaining segment frames with partial derivatives.
// ---------------------------------------------------------------------------

/// Base frame of a segment within the chain, with partials of the pose with
/// respect to all chart coordinates of the preceding segments.
#[derive(Debug, Clone)]
pub(crate) struct BaseFrame {
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
    /// One entry per preceding coordinate.
    pub drot: Vec<Matrix3<f64>>,
    pub dpos: Vec<Vector3<f64>>,
    /// Body-frame rotation axes `vee(rot^T drot_j)`, cached for angular
    /// velocity columns.
    pub axes: Vec<Vector3<f64>>,
}

impl BaseFrame {
    fn identity() -> Self {
        BaseFrame {
            rot: Matrix3::identity(),
            pos: Vector3::zeros(),
            drot: Vec::new(),
            dpos: Vec::new(),
            axes: Vec::new(),
        }
    }
}

pub(crate) fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// Base frames of every segment plus the tip frame (`m + 1` entries), each
/// carrying pose partials with respect to the preceding coordinates.
pub(crate) fn chain_bases<C: Chart>(
    chart: &C,
    robot: &RobotSpec,
    coords: &DVector<f64>,
) -> Vec<BaseFrame> {
    let m = robot.segments.len();
    let mut bases = Vec::with_capacity(m + 1);
    bases.push(BaseFrame::identity());
    for (i, seg) in robot.segments.iter().enumerate() {
        let prev = &bases[i];
        let end = chart.local_point(
            seg,
            Vector2::new(coords[2 * i], coords[2 * i + 1]),
            seg.length,
            true,
        );
        let (end_rot, end_drot) = end.rot.as_ref().expect("end frame carries rotation");

        let rot = prev.rot * end_rot;
        let pos = prev.pos + prev.rot * end.pos;
        let mut drot = Vec::with_capacity(2 * (i + 1));
        let mut dpos = Vec::with_capacity(2 * (i + 1));
        for j in 0..2 * i {
            drot.push(prev.drot[j] * end_rot);
            dpos.push(prev.dpos[j] + prev.drot[j] * end.pos);
        }
        for (k, end_drot_k) in end_drot.iter().enumerate() {
            drot.push(prev.rot * end_drot_k);
            dpos.push(prev.rot * end.dpos.column(k));
        }
        let axes = drot.iter().map(|d| vee(&(rot.transpose() * d))).collect();
        bases.push(BaseFrame {
            rot,
            pos,
            drot,
            dpos,
            axes,
        });
    }
    bases
}

/// Writes the world-frame position Jacobian of a point on segment `i` into
/// a zeroed `3 x dof` matrix.
pub(crate) fn fill_point_jacobian(
    jac: &mut DMatrix<f64>,
    base: &BaseFrame,
    lp: &LocalPoint,
    i: usize,
) {
    for j in 0..2 * i {
        let col = base.drot[j] * lp.pos + base.dpos[j];
        jac.view_mut((0, j), (3, 1)).copy_from(&col);
    }
    for k in 0..2 {
        let col = base.rot * lp.dpos.column(k);
        jac.view_mut((0, 2 * i + k), (3, 1)).copy_from(&col);
    }
}

/// Writes the body-frame angular velocity Jacobian of the cross-section
/// frame into a zeroed `3 x dof` matrix.
pub(crate) fn fill_angular_jacobian(
    jac: &mut DMatrix<f64>,
    base: &BaseFrame,
    lp: &LocalPoint,
    i: usize,
) {
    let (rot_loc, drot_loc) = lp.rot.as_ref().expect("angular Jacobian needs rotation");
    let rot_loc_t = rot_loc.transpose();
    for j in 0..2 * i {
        let col = rot_loc_t * base.axes[j];
        jac.view_mut((0, j), (3, 1)).copy_from(&col);
    }
    for (k, drot_loc_k) in drot_loc.iter().enumerate() {
        let col = vee(&(rot_loc_t * drot_loc_k));
        jac.view_mut((0, 2 * i + k), (3, 1)).copy_from(&col);
    }
}

// ---------------------------------------------------------------------------
// Public kinematics queries.
// ---------------------------------------------------------------------------

fn check_arc_length(seg: &SegmentSpec, s: f64) -> Result<()> {
    if !(0.0..=seg.length).contains(&s) {
        return Err(Error::ArcLengthOutOfRange {
            s,
            length: seg.length,
        });
    }
    Ok(())
}

/// Pose of the cross-section at arc length `s` of a single segment, relative
/// to the segment base. Smooth through the straight configuration.
pub fn backbone_point(seg: &SegmentSpec, qm: &Vector2<f64>, s: f64) -> Result<Frame> {
    check_arc_length(seg, s)?;
    let lp = ManifoldChart.local_point(seg, *qm, s, true);
    let (rot, _) = lp.rot.expect("rotation requested");
    Ok(Frame {
        rotation: rot,
        position: lp.pos,
    })
}

/// Base frames of all segments plus the tip frame, `m + 1` entries in base
/// coordinates.
pub fn chain_frames(robot: &RobotSpec, qm: &DVector<f64>) -> Result<Vec<Frame>> {
    robot.check_dof(qm, "chain_frames")?;
    let bases = chain_bases(&ManifoldChart, robot, qm);
    Ok(bases
        .into_iter()
        .map(|b| Frame {
            rotation: b.rot,
            position: b.pos,
        })
        .collect())
}

/// World pose of the cross-section at arc length `s` of segment
/// `segment_index`.
pub fn forward_kinematics(
    robot: &RobotSpec,
    qm: &DVector<f64>,
    segment_index: usize,
    s: f64,
) -> Result<Frame> {
    robot.check_dof(qm, "forward_kinematics")?;
    robot.check_segment(segment_index)?;
    let seg = &robot.segments[segment_index];
    check_arc_length(seg, s)?;
    let bases = chain_bases(&ManifoldChart, robot, qm);
    let base = &bases[segment_index];
    let lp = ManifoldChart.local_point(seg, robot.segment_coords(qm, segment_index), s, true);
    let (rot_loc, _) = lp.rot.expect("rotation requested");
    Ok(Frame {
        rotation: base.rot * rot_loc,
        position: base.pos + base.rot * lp.pos,
    })
}

/// Jacobian (3 x 2m) mapping coordinate rates to the translational velocity
/// of the point at arc length `s` on segment `segment_index`, in base
/// coordinates. Columns for distal segments are zero; `s = 0` on the first
/// segment gives the zero matrix.
pub fn point_jacobian(
    robot: &RobotSpec,
    qm: &DVector<f64>,
    segment_index: usize,
    s: f64,
) -> Result<DMatrix<f64>> {
    robot.check_dof(qm, "point_jacobian")?;
    robot.check_segment(segment_index)?;
    let seg = &robot.segments[segment_index];
    check_arc_length(seg, s)?;
    let bases = chain_bases(&ManifoldChart, robot, qm);
    let lp = ManifoldChart.local_point(seg, robot.segment_coords(qm, segment_index), s, false);
    let mut jac = DMatrix::zeros(3, robot.dof());
    fill_point_jacobian(&mut jac, &bases[segment_index], &lp, segment_index);
    Ok(jac)
}

/// Jacobian (3 x 2m) mapping coordinate rates to the body-frame angular
/// velocity of the cross-section frame at arc length `s` on segment
/// `segment_index`.
pub fn angular_velocity_jacobian(
    robot: &RobotSpec,
    qm: &DVector<f64>,
    segment_index: usize,
    s: f64,
) -> Result<DMatrix<f64>> {
    robot.check_dof(qm, "angular_velocity_jacobian")?;
    robot.check_segment(segment_index)?;
    let seg = &robot.segments[segment_index];
    check_arc_length(seg, s)?;
    let bases = chain_bases(&ManifoldChart, robot, qm);
    let lp = ManifoldChart.local_point(seg, robot.segment_coords(qm, segment_index), s, true);
    let mut jac = DMatrix::zeros(3, robot.dof());
    fill_angular_jacobian(&mut jac, &bases[segment_index], &lp, segment_index);
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_segment() -> SegmentSpec {
        SegmentSpec::default()
    }

    fn rand_qm(rng: &mut ChaCha8Rng, dof: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(dof, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn straight_segment_points_along_z() {
        let seg = default_segment();
        for s in [0.0, 0.07, 0.2] {
            let f = backbone_point(&seg, &Vector2::zeros(), s).unwrap();
            assert_abs_diff_eq!(f.position.x, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(f.position.y, 0.0, epsilon = 1e-15);
            assert_relative_eq!(f.position.z, s, max_relative = 1e-15);
            assert_relative_eq!(f.rotation, Matrix3::identity(), epsilon = 1e-15);
        }
    }

    #[test]
    fn quarter_circle_tip_position() {
        // theta = pi/2 in the phi = 0 plane: tip at (2l/pi, 0, 2l/pi).
        let seg = default_segment();
        let theta = std::f64::consts::FRAC_PI_2;
        let qm = Vector2::new(theta * seg.disk_radius, 0.0);
        let f = backbone_point(&seg, &qm, seg.length).unwrap();
        let expected = 2.0 * seg.length / std::f64::consts::PI;
        assert_relative_eq!(f.position.x, expected, max_relative = 1e-12);
        assert_abs_diff_eq!(f.position.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(f.position.z, expected, max_relative = 1e-12);
    }

    #[test]
    fn rotating_coordinates_rotates_the_curve() {
        let seg = default_segment();
        let qm = Vector2::new(3.1e-3, -1.2e-3);
        let alpha: f64 = 0.83;
        let rotated = Vector2::new(
            alpha.cos() * qm.x - alpha.sin() * qm.y,
            alpha.sin() * qm.x + alpha.cos() * qm.y,
        );
        let s = 0.13;
        let f = backbone_point(&seg, &qm, s).unwrap();
        let fr = backbone_point(&seg, &rotated, s).unwrap();
        let rz = Matrix3::new(
            alpha.cos(),
            -alpha.sin(),
            0.0,
            alpha.sin(),
            alpha.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let expected = rz * f.position;
        assert_relative_eq!(fr.position, expected, epsilon = 1e-15, max_relative = 1e-12);
    }

    #[test]
    fn rotation_stays_orthonormal() {
        let seg = default_segment();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let qm = Vector2::new(
                rng.random_range(-0.03..0.03),
                rng.random_range(-0.03..0.03),
            );
            let s = rng.random_range(0.0..seg.length);
            let f = backbone_point(&seg, &qm, s).unwrap();
            let gram = f.rotation.transpose() * f.rotation;
            assert_relative_eq!(gram, Matrix3::identity(), epsilon = 1e-10);
            assert_relative_eq!(f.rotation.determinant(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn arc_length_is_preserved_along_the_backbone() {
        let seg = default_segment();
        let qm = Vector2::new(5.5e-3, -2.5e-3);
        let h = 1e-6;
        for s in [0.02, 0.11, 0.19] {
            let fp = backbone_point(&seg, &qm, s + h).unwrap();
            let fm = backbone_point(&seg, &qm, s - h).unwrap();
            let tangent = (fp.position - fm.position) / (2.0 * h);
            assert_relative_eq!(tangent.norm(), 1.0, max_relative = 1e-8);
            // The tangent is the local frame z axis.
            let f = backbone_point(&seg, &qm, s).unwrap();
            let z = f.rotation.column(2);
            assert_relative_eq!(tangent.x, z[0], epsilon = 1e-7);
            assert_relative_eq!(tangent.z, z[2], epsilon = 1e-7);
        }
    }

    #[test]
    fn near_straight_evaluation_is_continuous() {
        let seg = default_segment();
        let f0 = backbone_point(&seg, &Vector2::zeros(), seg.length).unwrap();
        for alpha in [0.0, 1.0, 2.5, 4.0] {
            // Tip sensitivity to qm is about l / (2 r_d) ~ 14, so a 1e-5
            // displacement moves the tip by at most ~2e-4 m.
            let qm = Vector2::new(1e-5 * f64::cos(alpha), 1e-5 * f64::sin(alpha));
            let f = backbone_point(&seg, &qm, seg.length).unwrap();
            assert!((f.position - f0.position).norm() < 2e-4);
            assert!((f.rotation - f0.rotation).norm() < 1e-2);
        }
        // The smooth basis itself is continuous across the series switch.
        let below = arc_basis(SERIES_SWITCH * (1.0 - 1e-12));
        let above = arc_basis(SERIES_SWITCH * (1.0 + 1e-12));
        assert_relative_eq!(below.g1, above.g1, max_relative = 1e-12);
        assert_relative_eq!(below.g2, above.g2, max_relative = 1e-12);
        assert_relative_eq!(below.h1, above.h1, max_relative = 1e-10);
        assert_relative_eq!(below.h2, above.h2, max_relative = 1e-10);
    }

    #[test]
    fn chained_frames_compose_segment_tips() {
        let robot = RobotSpec::uniform(2, 5);
        let qm = DVector::from_vec(vec![4e-3, -2e-3, 1e-3, 3e-3]);
        let frames = chain_frames(&robot, &qm).unwrap();
        assert_eq!(frames.len(), 3);
        // Second base = first tip.
        let f1 = backbone_point(
            &robot.segments[0],
            &robot.segment_coords(&qm, 0),
            robot.segments[0].length,
        )
        .unwrap();
        assert_relative_eq!(frames[1].position, f1.position, epsilon = 1e-14);
        // Tip via forward_kinematics agrees with the chained tip frame.
        let tip = forward_kinematics(&robot, &qm, 1, robot.segments[1].length).unwrap();
        assert_relative_eq!(frames[2].position, tip.position, epsilon = 1e-14);
        assert_relative_eq!(frames[2].rotation, tip.rotation, epsilon = 1e-14);
    }

    #[test]
    fn point_jacobian_straight_block_value() {
        let robot = RobotSpec::uniform(1, 5);
        let seg = &robot.segments[0];
        let qm = DVector::zeros(2);
        for s in [0.05, 0.13, 0.2] {
            let jac = point_jacobian(&robot, &qm, 0, s).unwrap();
            let expected = s * s / (2.0 * seg.length * seg.disk_radius);
            assert_relative_eq!(jac[(0, 0)], expected, max_relative = 1e-14);
            assert_relative_eq!(jac[(1, 1)], expected, max_relative = 1e-14);
            assert_abs_diff_eq!(jac[(0, 1)], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(jac[(2, 0)], 0.0, epsilon = 1e-15);
        }
        let jac0 = point_jacobian(&robot, &qm, 0, 0.0).unwrap();
        assert_abs_diff_eq!(jac0.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn point_jacobian_matches_finite_differences() {
        let robot = RobotSpec::uniform(2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-7;
        for _ in 0..120 {
            let qm = rand_qm(&mut rng, robot.dof(), 0.02);
            let seg_idx = rng.random_range(0..2);
            let s = rng.random_range(0.0..robot.segments[seg_idx].length);
            let jac = point_jacobian(&robot, &qm, seg_idx, s).unwrap();
            for col in 0..robot.dof() {
                let mut plus = qm.clone();
                let mut minus = qm.clone();
                plus[col] += h;
                minus[col] -= h;
                let fp = forward_kinematics(&robot, &plus, seg_idx, s).unwrap();
                let fm = forward_kinematics(&robot, &minus, seg_idx, s).unwrap();
                let fd = (fp.position - fm.position) / (2.0 * h);
                for r in 0..3 {
                    assert_relative_eq!(jac[(r, col)], fd[r], max_relative = 1e-5, epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn angular_jacobian_matches_finite_differences() {
        let robot = RobotSpec::uniform(2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-7;
        for _ in 0..120 {
            let qm = rand_qm(&mut rng, robot.dof(), 0.02);
            let seg_idx = rng.random_range(0..2);
            let s = rng.random_range(0.0..robot.segments[seg_idx].length);
            let jac = angular_velocity_jacobian(&robot, &qm, seg_idx, s).unwrap();
            for col in 0..robot.dof() {
                let mut plus = qm.clone();
                let mut minus = qm.clone();
                plus[col] += h;
                minus[col] -= h;
                let fp = forward_kinematics(&robot, &plus, seg_idx, s).unwrap();
                let fm = forward_kinematics(&robot, &minus, seg_idx, s).unwrap();
                let f = forward_kinematics(&robot, &qm, seg_idx, s).unwrap();
                // Body angular velocity: vee(R^T dR).
                let dr = (fp.rotation - fm.rotation) / (2.0 * h);
                let omega = vee(&(f.rotation.transpose() * dr));
                for r in 0..3 {
                    assert_relative_eq!(
                        jac[(r, col)],
                        omega[r],
                        max_relative = 1e-5,
                        epsilon = 1e-7
                    );
                }
            }
        }
    }

    #[test]
    fn planar_bend_rate_angular_velocity() {
        // Straight single segment, rate only on q_re: at arc length s the
        // frame turns about +y with magnitude (v / r_d) * (s / l).
        let robot = RobotSpec::uniform(1, 5);
        let seg = &robot.segments[0];
        let qm = DVector::zeros(2);
        let v = 0.37;
        for s in [0.05, 0.2] {
            let jac = angular_velocity_jacobian(&robot, &qm, 0, s).unwrap();
            let omega = jac.column(0) * v;
            let expected = v / seg.disk_radius * (s / seg.length);
            assert_abs_diff_eq!(omega[0], 0.0, epsilon = 1e-12);
            assert_relative_eq!(omega[1], expected, max_relative = 1e-12);
            assert_abs_diff_eq!(omega[2], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn arc_chart_agrees_with_manifold_chart_away_from_straight() {
        let seg = default_segment();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let rho: f64 = rng.random_range(1e-4..0.02);
            let phi: f64 = rng.random_range(-3.0..3.0);
            let qm = Vector2::new(rho * phi.cos(), rho * phi.sin());
            let arc = Vector2::new(phi, rho / seg.disk_radius);
            let s = rng.random_range(1e-3..seg.length);
            let mp = ManifoldChart.local_point(&seg, qm, s, true);
            let ap = ArcChart.local_point(&seg, arc, s, true);
            assert_relative_eq!(mp.pos, ap.pos, epsilon = 1e-12, max_relative = 1e-10);
            let (mr, _) = mp.rot.unwrap();
            let (ar, _) = ap.rot.unwrap();
            assert_relative_eq!(mr, ar, epsilon = 1e-10);
        }
    }

    #[test]
    fn arc_chart_partials_match_finite_differences() {
        let seg = default_segment();
        let coords = Vector2::new(0.7, 0.9); // (phi, theta)
        let s = 0.14;
        let lp = ArcChart.local_point(&seg, coords, s, true);
        let h = 1e-7;
        for k in 0..2 {
            let mut plus = coords;
            let mut minus = coords;
            plus[k] += h;
            minus[k] -= h;
            let lpp = ArcChart.local_point(&seg, plus, s, true);
            let lpm = ArcChart.local_point(&seg, minus, s, true);
            let fd_pos = (lpp.pos - lpm.pos) / (2.0 * h);
            for r in 0..3 {
                assert_relative_eq!(lp.dpos[(r, k)], fd_pos[r], max_relative = 1e-6, epsilon = 1e-9);
            }
            let fd_rot = (lpp.rot.unwrap().0 - lpm.rot.unwrap().0) / (2.0 * h);
            let (_, drot) = lp.rot.as_ref().unwrap();
            assert_relative_eq!(drot[k], fd_rot, epsilon = 1e-6);
        }
    }

    #[test]
    fn invalid_queries_are_rejected() {
        let robot = RobotSpec::uniform(1, 5);
        let seg = &robot.segments[0];
        assert!(matches!(
            backbone_point(seg, &Vector2::zeros(), -0.01),
            Err(Error::ArcLengthOutOfRange { .. })
        ));
        assert!(matches!(
            backbone_point(seg, &Vector2::zeros(), seg.length + 1e-9),
            Err(Error::ArcLengthOutOfRange { .. })
        ));
        let qm = DVector::zeros(2);
        assert!(matches!(
            point_jacobian(&robot, &qm, 1, 0.1),
            Err(Error::SegmentIndexOutOfRange { .. })
        ));
        let bad = DVector::zeros(3);
        assert!(matches!(
            chain_frames(&robot, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut bad_robot = RobotSpec::uniform(1, 2);
        assert!(bad_robot.validate().is_err());
        bad_robot.tendon_count = 5;
        bad_robot.segments[0].length = -1.0;
        assert!(bad_robot.validate().is_err());
    }
}
