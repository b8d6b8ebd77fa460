use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes surfaced by the library. Variants carry enough context to
/// name the offending input (row indices, orders, tolerances) so callers can
/// report actionable messages without re-deriving anything.
#[derive(Debug, Error)]
pub enum Error {
    #[error("smoothness order m={m} requires 2m > d, got d={d}")]
    OrderTooLow { m: usize, d: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design points {i} and {j} coincide; points must be mutually distinct")]
    DuplicatePoints { i: usize, j: usize },

    #[error("point set is not unisolvent for polynomials of total degree {degree}")]
    NotUnisolvent { degree: usize },

    #[error("no well-conditioned anchor set found after {attempts} jitter attempts")]
    AnchorSelectionFailed { attempts: usize },

    #[error("linear system is numerically singular (relative residual {residual:.3e})")]
    SingularSystem { residual: f64 },

    #[error("derivative order {order} is not supported for m={m}, d={d}")]
    UnsupportedDerivative { order: usize, m: usize, d: usize },

    #[error(
        "bound search did not converge: target {target:.6e} not attained within \
         [{lo:.3e}, {hi:.3e}] after {iterations} iterations"
    )]
    RootFindFailed {
        target: f64,
        lo: f64,
        hi: f64,
        iterations: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model document error: {0}")]
    ModelParse(String),

    #[error("unsupported model document version {found}, this build reads version {expected}")]
    VersionMismatch { expected: u32, found: String },
}
