//! Browser demo: two-tone heterodyne spectra, the Kerr peak-ratio sweep and
//! sideband-asymmetry thermometry for a fixed silicon nanobeam device.
//!
//! The `#[wasm_bindgen]` exports are thin wrappers; the work happens in the
//! plain functions below so they can be tested natively.

use floquet_om::analytic::{normalized_peak_ratio, sideband_center};
use floquet_om::floquet::{converged_spectrum, heterodyne_spectrum};
use floquet_om::model::{hz, to_hz};
use floquet_om::spectrum::linspace;
use floquet_om::thermometry::occupancy_from_asymmetry;
use floquet_om::{
    DetectionParams, EnvironmentParams, KerrModel, SystemParams, Tone, ToneRole, ToneSet,
};
use wasm_bindgen::prelude::*;

const GRID_POINTS: usize = 601;

fn device() -> SystemParams {
    SystemParams::new(hz(1.6e9), hz(0.48e9), hz(5.3e9), hz(150e3), hz(780e3))
        .expect("device parameters are valid")
}

fn kerr(gamma_th_mhz: f64, g_product_mhz2: f64) -> Result<KerrModel, String> {
    KerrModel::new(hz(gamma_th_mhz * 1e6), hz(1.0).powi(2) * g_product_mhz2 * 1e12, 0.0)
        .map_err(|e| e.to_string())
}

/// A curve plus a short description of how it was computed.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    x: Vec<f64>,
    y: Vec<f64>,
    note: String,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn note(&self) -> String {
        self.note.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumInputs {
    pub n_c: f64,
    pub omega_mod_mhz: f64,
    pub gamma_th_mhz: f64,
    pub g_product_mhz2: f64,
    pub n_th: f64,
    pub eta: f64,
}

/// Heterodyne spectrum of a red probe on the lower sideband and a cooling
/// tone `omega_mod` above it, against offset from the red sideband in MHz.
pub fn two_tone_spectrum(i: &SpectrumInputs) -> Result<Curve, String> {
    let p = device();
    let om = hz(i.omega_mod_mhz * 1e6);
    let red = Tone::new(ToneRole::RedProbe, -p.omega_m, i.n_c).map_err(|e| e.to_string())?;
    let cool = Tone::new(ToneRole::Cooling, -p.omega_m + om, i.n_c).map_err(|e| e.to_string())?;
    let x0 = sideband_center(&p, &red);
    let tones = ToneSet::new(vec![red, cool], &p).map_err(|e| e.to_string())?;
    let env = EnvironmentParams::new(i.n_th, 0.0).map_err(|e| e.to_string())?;
    let det = DetectionParams::new(i.eta, 0.0).map_err(|e| e.to_string())?;
    let grid = linspace(x0 - 3.0 * om, x0 + 4.0 * om, GRID_POINTS);
    let (sn, window) = converged_spectrum(&p, &tones, &kerr(i.gamma_th_mhz, i.g_product_mhz2)?, &env, &grid, 1e-6)
        .map_err(|e| e.to_string())?;
    let het = heterodyne_spectrum(&sn, &det).map_err(|e| e.to_string())?;
    Ok(Curve {
        x: grid.iter().map(|&x| to_hz(x - x0) / 1e6).collect(),
        y: het.values,
        note: format!("Fourier window {} optical, {} mechanical", window.optical, window.mechanical),
    })
}

/// Kerr-induced peak ratio against modulation frequency in MHz, log-spaced.
pub fn peak_ratio_sweep(
    gamma_th_mhz: f64,
    g_product_mhz2: f64,
    n_c: f64,
    start_mhz: f64,
    stop_mhz: f64,
    points: usize,
) -> Result<Curve, String> {
    if !(start_mhz > 0.0 && stop_mhz > start_mhz && points >= 2) {
        return Err("need 0 < start < stop and at least 2 points".into());
    }
    let f: Vec<f64> = linspace(start_mhz.ln(), stop_mhz.ln(), points).into_iter().map(f64::exp).collect();
    let omegas: Vec<f64> = f.iter().map(|&m| hz(m * 1e6)).collect();
    let y = normalized_peak_ratio(&device(), &kerr(gamma_th_mhz, g_product_mhz2)?, n_c, &omegas)
        .map_err(|e| e.to_string())?;
    Ok(Curve {
        x: f,
        y,
        note: format!("n_c = {n_c}"),
    })
}

/// Mean occupancy from the anti-Stokes/Stokes area ratio of equal-cooperativity probes.
pub fn occupancy(ratio: f64) -> Result<f64, String> {
    occupancy_from_asymmetry(ratio, 1.0, 1.0, 1.0).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = twoToneSpectrum)]
pub fn two_tone_spectrum_js(
    n_c: f64,
    omega_mod_mhz: f64,
    gamma_th_mhz: f64,
    g_product_mhz2: f64,
    n_th: f64,
    eta: f64,
) -> Result<Curve, JsValue> {
    two_tone_spectrum(&SpectrumInputs {
        n_c,
        omega_mod_mhz,
        gamma_th_mhz,
        g_product_mhz2,
        n_th,
        eta,
    })
    .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = peakRatioSweep)]
pub fn peak_ratio_sweep_js(
    gamma_th_mhz: f64,
    g_product_mhz2: f64,
    n_c: f64,
    start_mhz: f64,
    stop_mhz: f64,
    points: usize,
) -> Result<Curve, JsValue> {
    peak_ratio_sweep(gamma_th_mhz, g_product_mhz2, n_c, start_mhz, stop_mhz, points)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = occupancyFromRatio)]
pub fn occupancy_js(ratio: f64) -> Result<f64, JsValue> {
    occupancy(ratio).map_err(|e| JsValue::from_str(&e))
}
