use thiserror::Error;

/// Errors reported by the kinematics, dynamics and simulation layers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Fewer than three tendons cannot span the bending plane.
    #[error("tendon count must be at least 3, got {0}")]
    TendonCount(usize),

    /// A vector or matrix argument has the wrong size.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An arc-space operation was evaluated too close to a straight segment,
    /// where `(phi, theta)` are not defined.
    #[error("arc-space parameters are singular near the straight configuration (rho = {rho:.3e} m, limit {limit:.3e} m)")]
    NearStraight { rho: f64, limit: f64 },

    /// Arc length outside the segment.
    #[error("arc length {s} m outside segment range [0, {length} m]")]
    ArcLengthOutOfRange { s: f64, length: f64 },

    /// Segment index outside the robot.
    #[error("segment index {index} out of range for {count} segments")]
    SegmentIndexOutOfRange { index: usize, count: usize },

    /// The generalized mass matrix lost positive definiteness.
    #[error("mass matrix is not positive definite at t = {time} s")]
    MassMatrixNotSpd { time: f64 },

    /// The adaptive integrator drove the step below the hard floor.
    #[error("integrator step size underflow at t = {time} s (h = {step:.3e} s)")]
    StepSizeUnderflow { time: f64, step: f64 },

    /// A state or derivative stopped being finite.
    #[error("non-finite value encountered at t = {time} s during {context}")]
    NonFinite { context: &'static str, time: f64 },

    /// A parameter failed validation.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad
    /// inputs); the CLI maps these to a distinct exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::MassMatrixNotSpd { .. }
                | Error::StepSizeUnderflow { .. }
                | Error::NonFinite { .. }
        )
    }
}
