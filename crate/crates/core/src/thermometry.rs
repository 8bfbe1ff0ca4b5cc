//! Sideband weights to phonon occupancies, plus the cooling, heating and
//! signal-to-noise models.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};
use crate::fitting::{least_squares, FitProblem};
use crate::model::{DetectionParams, EnvironmentParams, SystemParams, Tone, ToneRole};
use crate::spectrum::{Normalization, SpectrumTrace};

/// One fitted Lorentzian sideband.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianFit {
    pub center: f64,
    pub hwhm: f64,
    /// Peak height above the floor.
    pub height: f64,
    /// Integrated area above the floor, `pi height hwhm`.
    pub area: f64,
    /// Covariance of `(center, hwhm, height, area)`.
    pub covariance: Matrix4<f64>,
}

impl LorentzianFit {
    pub fn area_sigma(&self) -> f64 {
        self.covariance[(3, 3)].max(0.0).sqrt()
    }

    pub fn value(&self, x: f64) -> f64 {
        self.height * self.hwhm * self.hwhm / (self.hwhm * self.hwhm + (x - self.center).powi(2))
    }
}

/// Result of a multi-peak fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakFit {
    /// Sorted by centre.
    pub peaks: Vec<LorentzianFit>,
    pub floor: f64,
    pub floor_sigma: f64,
    pub residual_norm: f64,
    pub warnings: Vec<String>,
}

/// Least-squares fit of a floor plus `n_peaks` Lorentzians.
pub fn fit_lorentzians(trace: &SpectrumTrace, n_peaks: usize, init_centers: &[f64]) -> Result<PeakFit> {
    if init_centers.len() != n_peaks {
        return Err(Error::Fit(format!(
            "{n_peaks} peaks requested with {} initial centres",
            init_centers.len()
        )));
    }
    fit_lorentzians_weighted(trace, init_centers, None)
}

/// [`fit_lorentzians`] with optional absolute per-sample standard deviations.
///
/// With `sigma` the covariance is not rescaled by the reduced chi-square.
pub fn fit_lorentzians_weighted(
    trace: &SpectrumTrace,
    init_centers: &[f64],
    sigma: Option<&[f64]>,
) -> Result<PeakFit> {
    if trace.normalization != Normalization::ShotNoiseNormalized {
        return Err(Error::Fit("peak fits expect a shot-noise-normalized trace".into()));
    }
    if init_centers.is_empty() {
        return Err(Error::Fit("no initial centres".into()));
    }
    let x = &trace.freq_grid;
    let y = &trace.values;
    let n = x.len();
    if n < 3 * init_centers.len() + 2 {
        return Err(Error::Fit(format!("{n} samples are too few")));
    }
    if let Some(s) = sigma {
        if s.len() != n || s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Fit("sigma must be positive and match the grid".into()));
        }
    }
    let floor0 = median(y);
    let span = x[n - 1] - x[0];
    let max_excess = y.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v - floor0));
    if !(max_excess > 1e-9 * floor0.abs().max(1.0)) {
        return Err(Error::Fit("trace has no peak above its floor".into()));
    }

    let mut p0 = vec![floor0];
    let mut scale = vec![floor0.abs().max(1e-3)];
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY)];
    let mut warnings = Vec::new();
    let mut guesses = Vec::new();
    for &c in init_centers {
        let i = nearest(x, c);
        let h = y[i] - floor0;
        if !(h > 0.0) {
            return Err(Error::Fit(format!("no peak above the floor near {c:e}")));
        }
        let w = half_width(x, y, i, floor0 + 0.5 * h).max(span / n as f64);
        guesses.push((x[i], w));
        p0.extend([x[i], w, PI * h * w]);
        scale.extend([w, w, PI * h * w]);
        bounds.extend([(x[0], x[n - 1]), (1e-6 * w, span), (f64::NEG_INFINITY, f64::INFINITY)]);
    }
    for (k, a) in guesses.iter().enumerate() {
        for b in &guesses[k + 1..] {
            if (a.0 - b.0).abs() < 2.0 * a.1.max(b.1) {
                warnings.push(format!(
                    "peaks near {:e} and {:e} overlap within two half-widths",
                    a.0, b.0
                ));
            }
        }
    }

    let weights: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; n],
    };
    let model = |p: &[f64], xv: f64| {
        let mut v = p[0];
        for k in 0..(p.len() - 1) / 3 {
            let (c, w, a) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
            v += a / PI * w / (w * w + (xv - c).powi(2));
        }
        v
    };
    let problem = FitProblem::new(
        |p: &[f64]| Ok((0..n).map(|i| (model(p, x[i]) - y[i]) * weights[i]).collect()),
        p0,
    )
    .with_bounds(bounds)
    .with_scale(scale)
    .with_scaled_covariance(sigma.is_none());
    let fit = least_squares(&problem, 1e-12, 500)?;
    if !fit.converged {
        return Err(Error::Fit(format!(
            "Lorentzian fit did not converge after {} iterations (residual norm {:e})",
            fit.iterations, fit.residual_norm
        )));
    }
    let p = &fit.parameters;
    let cov = &fit.covariance;
    let mut peaks: Vec<LorentzianFit> = (0..init_centers.len())
        .map(|k| lorentzian_from(p, cov, 1 + 3 * k))
        .collect();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    for pk in &peaks {
        if !(pk.hwhm > 0.0 && pk.area.is_finite()) {
            return Err(Error::Fit("degenerate peak in fit result".into()));
        }
    }
    Ok(PeakFit {
        peaks,
        floor: p[0],
        floor_sigma: cov[(0, 0)].max(0.0).sqrt(),
        residual_norm: fit.residual_norm,
        warnings,
    })
}

fn lorentzian_from(p: &[f64], cov: &DMatrix<f64>, o: usize) -> LorentzianFit {
    let (c, w, a) = (p[o], p[o + 1], p[o + 2]);
    let height = a / (PI * w);
    // (center, hwhm, height, area) as functions of (center, hwhm, area).
    let mut jac = nalgebra::Matrix4x3::<f64>::zeros();
    jac[(0, 0)] = 1.0;
    jac[(1, 1)] = 1.0;
    jac[(2, 1)] = -height / w;
    jac[(2, 2)] = 1.0 / (PI * w);
    jac[(3, 2)] = 1.0;
    let sub = cov.fixed_view::<3, 3>(o, o).into_owned();
    let covariance = jac * sub * jac.transpose();
    LorentzianFit {
        center: c,
        hwhm: w,
        height,
        area: a,
        covariance,
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

fn nearest(x: &[f64], c: f64) -> usize {
    let i = x.partition_point(|&v| v < c);
    if i == 0 {
        0
    } else if i == x.len() || (c - x[i - 1]) <= (x[i] - c) {
        i - 1
    } else {
        i
    }
}

fn half_width(x: &[f64], y: &[f64], i: usize, level: f64) -> f64 {
    let mut r = i;
    while r + 1 < x.len() && y[r] > level {
        r += 1;
    }
    let mut l = i;
    while l > 0 && y[l] > level {
        l -= 1;
    }
    0.5 * (x[r] - x[l])
}

/// Occupancy from the anti-Stokes/Stokes weight ratio, corrected for the
/// cooperativities of the tones producing each sideband.
pub fn occupancy_from_asymmetry(
    w_antistokes: f64,
    w_stokes: f64,
    c_anti: f64,
    c_stokes: f64,
) -> Result<f64> {
    if !(w_antistokes >= 0.0 && w_stokes > 0.0) || !w_antistokes.is_finite() || !w_stokes.is_finite() {
        return Err(Error::Domain(format!(
            "weights must be positive, got {w_antistokes:e} and {w_stokes:e}"
        )));
    }
    if !(c_anti > 0.0 && c_stokes > 0.0) {
        return Err(Error::Domain("cooperativities must be positive".into()));
    }
    let ratio = w_antistokes * c_stokes / (w_stokes * c_anti);
    if ratio >= 1.0 {
        return Err(Error::UnphysicalAsymmetry { ratio });
    }
    Ok(ratio / (1.0 - ratio))
}

/// Fractional bias of a sideband ratio from a detuning error `epsilon`: the
/// two probes see the cavity Lorentzian at `omega_m + epsilon` and
/// `omega_m - epsilon` instead of both at `omega_m`.
pub fn tuning_ratio_error(kappa: f64, omega_m: f64, epsilon: f64) -> f64 {
    let l = |d: f64| 1.0 / (0.25 * kappa * kappa + d * d);
    (l(omega_m + epsilon) / l(omega_m - epsilon) - 1.0).abs()
}

/// Occupancy and its one-sigma uncertainty from two fitted sidebands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymmetryEstimate {
    pub n_bar: f64,
    pub sigma: f64,
    pub ratio: f64,
}

/// [`occupancy_from_asymmetry`] with fit errors and an optional fractional
/// ratio error (e.g. from [`tuning_ratio_error`]) combined in quadrature.
pub fn asymmetry_estimate(
    anti: &LorentzianFit,
    stokes: &LorentzianFit,
    c_anti: f64,
    c_stokes: f64,
    extra_ratio_error: f64,
) -> Result<AsymmetryEstimate> {
    let n_bar = occupancy_from_asymmetry(anti.area.max(0.0), stokes.area, c_anti, c_stokes)?;
    let ratio = n_bar / (1.0 + n_bar);
    let rel_a = if anti.area > 0.0 { anti.area_sigma() / anti.area } else { 0.0 };
    let rel_s = stokes.area_sigma() / stokes.area;
    let rel = (rel_a * rel_a + rel_s * rel_s + extra_ratio_error * extra_ratio_error).sqrt();
    let sigma = ratio * rel / (1.0 - ratio).powi(2);
    Ok(AsymmetryEstimate {
        n_bar,
        sigma,
        ratio,
    })
}

/// Area of a sideband per unit occupancy factor (`n_bar` or `n_bar + 1`).
fn area_per_phonon(params: &SystemParams, tone: &Tone, eta: f64) -> f64 {
    2.0 * PI * eta * params.escape_efficiency() * params.gamma_m * tone.cooperativity(params)
}

/// Occupancy from the absolute area of one calibrated sideband.
pub fn occupancy_from_weight(
    fit: &LorentzianFit,
    params: &SystemParams,
    tone: &Tone,
    det: &DetectionParams,
) -> Result<f64> {
    let eta = det.eta.ok_or_else(|| {
        Error::CalibrationRequired("detection efficiency must be calibrated first".into())
    })?;
    let unit = area_per_phonon(params, tone, eta);
    if !(unit > 0.0) {
        return Err(Error::Domain("tone has zero cooperativity or eta is zero".into()));
    }
    let x = fit.area / unit;
    Ok(match tone.role {
        ToneRole::BlueProbe => x - 1.0,
        _ => x,
    })
}

/// A data point pairing an asymmetry occupancy with a calibrated sideband area.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPoint {
    pub n_bar: f64,
    pub n_bar_sigma: f64,
    /// Area of a red-side sideband.
    pub area: f64,
    pub area_sigma: f64,
    /// Cooperativity of the tone producing that sideband.
    pub cooperativity: f64,
}

/// Detection efficiency and its uncertainty, combining per-point estimates
/// by inverse-variance weighting.
pub fn calibrate_efficiency(points: &[CalibrationPoint], params: &SystemParams) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(Error::Fit("no calibration points".into()));
    }
    let mut est = Vec::with_capacity(points.len());
    for p in points {
        if !(p.n_bar > 0.0 && p.cooperativity > 0.0 && p.area > 0.0) {
            return Err(Error::Domain("calibration needs positive n_bar, C and area".into()));
        }
        let unit = 2.0 * PI * params.escape_efficiency() * params.gamma_m * p.cooperativity * p.n_bar;
        let eta = p.area / unit;
        let rel2 = (p.area_sigma / p.area).powi(2) + (p.n_bar_sigma / p.n_bar).powi(2);
        est.push((eta, eta * eta * rel2));
    }
    Ok(inverse_variance_mean(&est))
}

/// Weighted mean of `(value, variance)` pairs; zero-variance entries dominate.
pub fn inverse_variance_mean(values: &[(f64, f64)]) -> (f64, f64) {
    let exact: Vec<f64> = values.iter().filter(|v| v.1 == 0.0).map(|v| v.0).collect();
    if !exact.is_empty() {
        return (exact.iter().sum::<f64>() / exact.len() as f64, 0.0);
    }
    let (mut sw, mut swx) = (0.0, 0.0);
    for &(x, var) in values {
        sw += 1.0 / var;
        swx += x / var;
    }
    (swx / sw, (1.0 / sw).sqrt())
}

/// Steady-state occupancy under sideband cooling with absorption heating,
/// `(n_th + alpha n_c) / (1 + C_0 n_c)`.
pub fn cooling_occupancy(env: &EnvironmentParams, c0: f64, n_c: f64) -> Result<f64> {
    if !(c0 >= 0.0 && n_c >= 0.0) {
        return Err(Error::Domain("c0 and n_c must be non-negative".into()));
    }
    Ok((env.n_th + env.alpha_heating * n_c) / (1.0 + c0 * n_c))
}

/// Peak of the cooling sideband above the shot-noise floor,
/// `4 eta (n_th + (alpha / C_0) C) C / (1 + C)^2`.
pub fn snr_model(det: &DetectionParams, env: &EnvironmentParams, c0: f64, c: f64) -> Result<f64> {
    let eta = det.efficiency()?;
    if !(c >= 0.0) {
        return Err(Error::Domain("cooperativity must be non-negative".into()));
    }
    let heating = if env.alpha_heating == 0.0 {
        0.0
    } else if c0 > 0.0 {
        env.alpha_heating / c0
    } else {
        return Err(Error::Domain("c0 must be positive when alpha is nonzero".into()));
    };
    Ok(4.0 * eta * (env.n_th + heating * c) * c / (1.0 + c).powi(2))
}

/// Quantum-backaction floor of resolved-sideband cooling, `kappa^2 / (16 omega_m^2)`.
pub fn quantum_backaction_limit(params: &SystemParams) -> f64 {
    params.kappa * params.kappa / (16.0 * params.omega_m * params.omega_m)
}

/// One point on a cooling curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingPoint {
    pub n_c: f64,
    pub n_bar: f64,
    pub gamma_tot: f64,
    pub snr: f64,
}

pub fn cooling_point(
    params: &SystemParams,
    env: &EnvironmentParams,
    det: &DetectionParams,
    n_c: f64,
) -> Result<CoolingPoint> {
    let c0 = params.single_photon_cooperativity();
    let c = c0 * n_c;
    Ok(CoolingPoint {
        n_c,
        n_bar: cooling_occupancy(env, c0, n_c)?,
        gamma_tot: params.gamma_m * (1.0 + c),
        snr: snr_model(det, env, c0, c)?,
    })
}
