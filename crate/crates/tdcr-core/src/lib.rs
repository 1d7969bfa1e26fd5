//! Constant-curvature dynamics and control of tendon-driven continuum robots.
//!
//! A robot is a serial chain of flexible segments, each bent into a circular
//! arc by `n >= 3` tendons spaced evenly around the backbone. Instead of
//! working with the `n` coupled tendon displacements directly, every segment
//! is described by two generalized coordinates `(q_re, q_im)` obtained from
//! the tendon displacements through the Clarke transform. On that
//! two-dimensional manifold the constant-curvature kinematics become smooth
//! (no straight-configuration singularity), the elastic and damping terms of
//! the Euler-Lagrange model reduce to constant diagonal blocks, and a linear
//! controller per segment is enough for closed-loop tracking.
//!
//! Module map:
//!
//! * [`clarke`] - transform matrices and the maps between tendon space, the
//!   manifold and arc parameters `(phi, theta)`.
//! * [`kinematics`] - robot description plus backbone frames and Jacobians.
//! * [`dynamics`] - energies and the manifold-space Euler-Lagrange terms.
//! * [`control`] - discrete PID/PD and tendon-force saturation strategies.
//! * [`ode`] - the adaptive Dormand-Prince 5(4) integrator used by [`sim`].
//! * [`sim`] - reference trajectories and the closed-loop tracking runner.
//! * [`checks`] - a deterministic self-test suite (used by `tdcr validate`).

pub mod checks;
pub mod clarke;
pub mod control;
pub mod dynamics;
pub mod kinematics;
pub mod ode;
pub mod quadrature;
pub mod sim;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
