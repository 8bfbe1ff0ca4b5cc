use thiserror::Error;

/// Errors raised by the model, solvers and fitting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter block violates one of its invariants.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The Fourier-mode window or another solver setting is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// The coupled-mode matrix is numerically singular at the given frequency.
    #[error("singular system at omega = {omega:e} rad/s (condition number {condition:e})")]
    Singular { omega: f64, condition: f64 },

    /// Growing Fourier windows did not settle the spectrum.
    #[error("no convergence after {doublings} window doublings (last relative change {last_change:e}, window {window})")]
    Convergence {
        doublings: usize,
        last_change: f64,
        window: String,
    },

    /// The time-domain integration diverged.
    #[error("unstable dynamics: {0}")]
    Unstable(String),

    /// The time-domain projection did not reach a periodic steady state.
    #[error("insufficient settling: harmonic drift {drift:e} between consecutive windows")]
    Settling { drift: f64 },

    /// A least-squares fit failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// The sideband weight ratio implies a negative or infinite occupancy.
    #[error("unphysical sideband asymmetry: corrected ratio {ratio} >= 1 (possible Kerr-type contamination)")]
    UnphysicalAsymmetry { ratio: f64 },

    /// An occupancy inversion needs a detection efficiency that is not set.
    #[error("calibration required: {0}")]
    CalibrationRequired(String),

    /// Two traces are not sampled on the same grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}
