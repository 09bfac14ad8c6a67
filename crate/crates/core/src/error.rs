use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular depth: z = {0} (the depth-scaled intrinsic matrix needs z != 0)")]
    SingularDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid scaled depth d = {0} (must be positive)")]
    InvalidDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("degenerate projection matrix (smallest singular value {0:e})")]
    DegenerateProjection(f64),
    #[error("inertia matrix numerically singular (condition number {0:e})")]
    SingularInertia(f64),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error(
        "feature {feature} not visible in the {camera} camera at t = {t:.4} s (depth {depth:.4e})"
    )]
    Visibility {
        t: f64,
        feature: usize,
        camera: &'static str,
        depth: f64,
    },
    #[error("non-finite state at t = {t:.4} s: {what}")]
    NonFinite { t: f64, what: String },
    #[error("divergence at t = {t:.4} s: |dy| = {error_norm:.4e} exceeds bound {bound:.4e}")]
    Divergence { t: f64, error_norm: f64, bound: f64 },
    #[error("empty trace")]
    EmptyTrace,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Errors raised by the closed loop that mean the run left its valid region,
    /// as opposed to malformed inputs.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Visibility { .. }
                | Error::NonFinite { .. }
                | Error::Divergence { .. }
                | Error::SingularInertia(_)
                | Error::BehindCamera(_)
                | Error::InvalidDepth(_)
        )
    }
}
