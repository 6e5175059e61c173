use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode ({m}, {n}) lies outside band limit {band}")]
    ModeOutOfBand { m: i64, n: i64, band: usize },

    #[error("spectrum is not Hermitian (max asymmetry {defect:.3e}); request symmetrization to accept one-sided input")]
    NonHermitian { defect: f64 },

    #[error("grid resolution {resolution} cannot represent band limit {band}")]
    GridTooSmall { resolution: usize, band: usize },

    #[error("positivity violated at ({x:.6}, {y:.6}): value {value:.6e}")]
    PositivityViolation { x: f64, y: f64, value: f64 },

    #[error("t = {t:e} lies outside the trust radius ({reason}); suggested max t = {suggested_max_t:.6e}")]
    TrustRadiusExceeded {
        t: f64,
        reason: String,
        suggested_max_t: f64,
    },

    #[error("step size underflow at time {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at time {t:.6e}")]
    StepLimit { t: f64, max_steps: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures caused by a numerical precondition (positivity,
    /// trust radius, stiffness) rather than a malformed request.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PositivityViolation { .. }
                | Error::TrustRadiusExceeded { .. }
                | Error::StepUnderflow { .. }
                | Error::StepLimit { .. }
        )
    }
}
