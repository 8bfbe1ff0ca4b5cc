//! Heterodyne noise spectra of a multi-tone driven optomechanical cavity with a
//! lagging Kerr-type (photothermal) nonlinearity.
//!
//! The central solver truncates the lattice of optical and mechanical Fourier
//! modes created by the periodic cavity-frequency modulation and evaluates the
//! time-averaged normal-ordered output spectrum. Closed-form limits, a
//! time-domain cross-check, thermometry and fitting routines sit around it.
//!
//! All frequencies and rates are angular (rad/s).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod model;
pub mod oracle;
pub mod fitting;
pub mod floquet;
pub mod response;
pub mod spectrum;
pub mod thermometry;

pub use error::{Error, Result};
pub use model::{
    DetectionParams, EnvironmentParams, KerrModel, SystemParams, Tone, ToneRole, ToneSet,
};
pub use spectrum::{Normalization, SpectrumTrace};
