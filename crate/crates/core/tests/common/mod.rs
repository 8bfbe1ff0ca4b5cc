#![allow(dead_code)]

use floquet_om::model::hz;
use floquet_om::{EnvironmentParams, KerrModel, SystemParams, Tone, ToneRole, ToneSet};

pub fn params() -> SystemParams {
    SystemParams::new(hz(1.6e9), hz(0.48e9), hz(5.3e9), hz(150e3), hz(780e3)).unwrap()
}

pub fn kerr() -> KerrModel {
    KerrModel::new(hz(6e6), hz(1.0).powi(2) * 10e12, 0.0).unwrap()
}

/// Red probe on the lower mechanical sideband plus a cooling tone
/// `omega_mod` above it, `n` photons each.
pub fn two_tones(p: &SystemParams, omega_mod: f64, n: f64) -> ToneSet {
    two_tones_offset(p, omega_mod, n, 0.0)
}

pub fn two_tones_offset(p: &SystemParams, omega_mod: f64, n: f64, offset: f64) -> ToneSet {
    let red = Tone::new(ToneRole::RedProbe, -p.omega_m + offset, n).unwrap();
    let cool = Tone::new(ToneRole::Cooling, -p.omega_m + offset + omega_mod, n).unwrap();
    ToneSet::new(vec![red, cool], p).unwrap()
}

pub fn env(n_th: f64) -> EnvironmentParams {
    EnvironmentParams::new(n_th, 0.0).unwrap()
}
