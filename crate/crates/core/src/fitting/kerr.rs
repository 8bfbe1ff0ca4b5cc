//! Estimation of the thermal nonlinearity from peak ratios or full spectra.

use nalgebra::Matrix2;

use super::lm::{least_squares, FitProblem, FitResult};
use crate::analytic::PeakRatioModel;
use crate::error::{Error, Result};
use crate::floquet::{converged_spectrum, noise_spectrum, CavityResponse, FloquetConfig};
use crate::model::{hz, DetectionParams, EnvironmentParams, KerrModel, SystemParams, ToneSet};
use crate::spectrum::{Normalization, SpectrumTrace};

/// Quadrature size used inside the ratio fit. The weights integrands are
/// close to Lorentzians matched to the tan map, so this is far from the limit.
const RATIO_FIT_NODES: usize = 2001;

/// Fitted nonlinearity with uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct KerrFit {
    pub kerr: KerrModel,
    /// Covariance of `(gamma_th, g_product)` in linear units.
    pub covariance: Matrix2<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `[gamma_th, g_product]` ended on a search bound.
    pub at_bounds: [bool; 2],
    pub warnings: Vec<String>,
}

impl KerrFit {
    pub fn gamma_th_sigma(&self) -> f64 {
        self.covariance[(0, 0)].max(0.0).sqrt()
    }

    pub fn g_product_sigma(&self) -> f64 {
        self.covariance[(1, 1)].max(0.0).sqrt()
    }
}

/// One modulation frequency of a peak-ratio measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSample {
    pub omega_mod: f64,
    pub ratio: f64,
    /// Standard deviation of `ratio`; unweighted when `None`.
    pub sigma: Option<f64>,
}

impl RatioSample {
    pub fn new(omega_mod: f64, ratio: f64) -> Self {
        Self {
            omega_mod,
            ratio,
            sigma: None,
        }
    }
}

// Search box in log space, relative to the reference values below.
const LOG_SPAN: f64 = 18.0;

fn reference() -> (f64, f64) {
    (hz(6e6), hz(1.0).powi(2) * 10e12)
}

fn log_bounds() -> Vec<(f64, f64)> {
    let (g0, p0) = reference();
    vec![
        ((g0 * 1e-3).ln(), (g0 * 1e3).ln()),
        (p0.ln() - LOG_SPAN, p0.ln() + LOG_SPAN),
    ]
}

fn starts() -> Vec<[f64; 2]> {
    let (g0, p0) = reference();
    let mut out = Vec::new();
    for fg in [0.3, 1.0, 3.0] {
        for fp in [0.3, 3.0] {
            out.push([(g0 * fg).ln(), (p0 * fp).ln()]);
        }
    }
    out
}

fn finish(fit: FitResult, warnings: Vec<String>) -> Result<KerrFit> {
    let gamma = fit.parameters[0].exp();
    let prod = fit.parameters[1].exp();
    let jac = Matrix2::new(gamma, 0.0, 0.0, prod);
    let cov_log = Matrix2::new(
        fit.covariance[(0, 0)],
        fit.covariance[(0, 1)],
        fit.covariance[(1, 0)],
        fit.covariance[(1, 1)],
    );
    let mut warnings = warnings;
    let names = ["gamma_th", "g_product"];
    for (name, &hit) in names.iter().zip(&fit.at_bounds) {
        if hit {
            warnings.push(format!("{name} finished on its search bound"));
        }
    }
    if !fit.converged {
        warnings.push("fit did not converge".into());
    }
    Ok(KerrFit {
        kerr: KerrModel::new(gamma, prod, 0.0)?,
        covariance: jac * cov_log * jac,
        residual_norm: fit.residual_norm,
        iterations: fit.iterations,
        converged: fit.converged,
        at_bounds: [fit.at_bounds[0], fit.at_bounds[1]],
        warnings,
    })
}

fn best_of(problems: Vec<FitProblem<'_>>) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for p in &problems {
        match least_squares(p, 1e-10, 200) {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.residual_norm < b.residual_norm) {
                    best = Some(f);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Fit("no fit attempted".into())))
}

/// Fits `gamma_th` and `g_product` to normalized cooling/probe peak ratios
/// measured at equal probe and cooling photon numbers `n_c`.
pub fn fit_kerr_from_ratio(
    data: &[RatioSample],
    params: &SystemParams,
    n_c: f64,
) -> Result<KerrFit> {
    if data.len() < 5 {
        return Err(Error::Fit(format!(
            "need at least 5 modulation frequencies, got {}",
            data.len()
        )));
    }
    for s in data {
        if !(s.ratio.is_finite() && s.ratio > 0.0) {
            return Err(Error::Fit(format!("invalid ratio {}", s.ratio)));
        }
        if let Some(sig) = s.sigma {
            if !(sig.is_finite() && sig > 0.0) {
                return Err(Error::Fit(format!("invalid ratio sigma {sig}")));
            }
        }
    }
    let weighted = data.iter().all(|s| s.sigma.is_some());
    let grid: Vec<f64> = data.iter().map(|s| s.omega_mod).collect();
    let model = PeakRatioModel::new(params, n_c, &grid, CavityResponse::Exact, RATIO_FIT_NODES)?;
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let kerr = KerrModel::new(u[0].exp(), u[1].exp(), 0.0)?;
        let pred = model.evaluate(&kerr)?;
        Ok(pred
            .iter()
            .zip(data)
            .map(|(p, s)| (p - s.ratio) / s.sigma.unwrap_or(1.0))
            .collect())
    };
    let problems = starts()
        .into_iter()
        .map(|u0| {
            FitProblem::new(residual, u0.to_vec())
                .with_bounds(log_bounds())
                .with_scale(vec![1.0, 1.0])
                .with_scaled_covariance(!weighted)
        })
        .collect();
    finish(best_of(problems)?, Vec::new())
}

/// A measured heterodyne spectrum and the tones that produced it.
#[derive(Debug, Clone)]
pub struct SpectrumSample {
    pub tones: ToneSet,
    pub trace: SpectrumTrace,
}

/// Joint fit of `gamma_th` and `g_product` to shot-noise-normalized spectra.
///
/// The sideband window is chosen once per spectrum by converging the model at
/// `initial` to `rel_tol`, then held fixed while fitting.
pub fn fit_kerr_from_spectra(
    data: &[SpectrumSample],
    params: &SystemParams,
    env: &EnvironmentParams,
    det: &DetectionParams,
    initial: &KerrModel,
    rel_tol: f64,
) -> Result<KerrFit> {
    if data.is_empty() {
        return Err(Error::Fit("no spectra supplied".into()));
    }
    let eta = det.efficiency()?;
    let mut configs: Vec<FloquetConfig> = Vec::with_capacity(data.len());
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(data.len());
    let mut warnings = Vec::new();
    for s in data {
        if s.trace.normalization != Normalization::ShotNoiseNormalized {
            return Err(Error::Fit("spectra must be shot-noise normalized".into()));
        }
        if s.tones.beat_amplitudes() == (0.0, 0.0) {
            return Err(Error::Fit(
                "each spectrum needs a red probe and a cooling tone".into(),
            ));
        }
        let axis: Vec<f64> = s.trace.freq_grid.iter().map(|f| f - det.delta_lo).collect();
        let (_, cfg) = converged_spectrum(params, &s.tones, initial, env, &axis, rel_tol)?;
        warnings.extend(s.trace.warnings.iter().cloned());
        configs.push(cfg);
        axes.push(axis);
    }
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let kerr = KerrModel::new(u[0].exp(), u[1].exp(), 0.0)?;
        let mut out = Vec::new();
        for ((s, cfg), axis) in data.iter().zip(&configs).zip(&axes) {
            let sn = noise_spectrum(params, &s.tones, &kerr, env, cfg, axis)?;
            out.extend(
                sn.values
                    .iter()
                    .zip(&s.trace.values)
                    .map(|(m, d)| 1.0 + eta * m - d),
            );
        }
        Ok(out)
    };
    let u0 = vec![initial.gamma_th.ln(), initial.g_product.ln()];
    if !u0.iter().all(|v| v.is_finite()) {
        return Err(Error::Fit(
            "initial nonlinearity must have positive gamma_th and g_product".into(),
        ));
    }
    let problem = FitProblem::new(residual, u0)
        .with_bounds(log_bounds())
        .with_scale(vec![1.0, 1.0]);
    finish(least_squares(&problem, 1e-10, 100)?, warnings)
}
