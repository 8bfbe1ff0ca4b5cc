//! Parameter estimation on top of a small Levenberg-Marquardt engine.

mod cooling;
mod kerr;
mod lm;

pub use cooling::{fit_cooling_curve, CoolingFit, CoolingSample};
pub use kerr::{fit_kerr_from_ratio, fit_kerr_from_spectra, KerrFit, RatioSample, SpectrumSample};
pub use lm::{least_squares, FitProblem, FitResult, ResidualFn};
