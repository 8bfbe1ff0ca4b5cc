//! Closed-form reference spectra.
//!
//! Every spectrum here is evaluated on a cavity-frame grid `x` (frequency
//! relative to the optical resonance) and returned on the heterodyne axis
//! `x + delta_lo`, in shot-noise units. Escape efficiency `kappa_ex/kappa`
//! is kept explicit, so `eta` is the detection efficiency alone.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::floquet::{converged_spectrum, CavityResponse, LatticeCoefficients, DEFAULT_WEIGHT_NODES};
use crate::model::{
    DetectionParams, EnvironmentParams, KerrModel, SystemParams, Tone, ToneRole, ToneSet,
};
use crate::spectrum::{check_grid, evaluate_grid, real_line_rule, Normalization, SpectrumTrace};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Optical and mechanical susceptibilities of a single red-side tone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Susceptibilities {
    pub kappa: f64,
    pub residual: f64,
    pub gamma_m: f64,
    pub gamma_tot: f64,
}

impl Susceptibilities {
    /// `1 / (kappa/2 - i (w + residual))`.
    pub fn chi_opt(&self, omega: f64) -> Complex64 {
        1.0 / Complex64::new(0.5 * self.kappa, -(omega + self.residual))
    }

    /// `1 / (gamma_m/2 - i w)`.
    pub fn chi_m(&self, omega: f64) -> Complex64 {
        1.0 / Complex64::new(0.5 * self.gamma_m, -omega)
    }

    /// `1 / (gamma_tot/2 - i w)`.
    pub fn chi_m_eff(&self, omega: f64) -> Complex64 {
        1.0 / Complex64::new(0.5 * self.gamma_tot, -omega)
    }
}

/// Switches for the three-sideband model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdealOptions {
    /// Include probe damping (`+C_red - C_blue`) in the total linewidth.
    pub probe_backaction: bool,
}

/// Integrated sideband weights on the heterodyne axis, in shot-noise units times rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SidebandWeights {
    pub red: f64,
    pub cooling: f64,
    pub blue: f64,
}

/// Total mechanical linewidth of the three-sideband model.
pub fn total_linewidth(params: &SystemParams, tones: &ToneSet, opts: IdealOptions) -> f64 {
    let c = |r| tones.cooperativity(r, params);
    let mut sum = c(ToneRole::Cooling);
    if opts.probe_backaction {
        sum += c(ToneRole::RedProbe) - c(ToneRole::BlueProbe);
    }
    params.gamma_m * (1.0 + sum)
}

/// Optical damping of a red-side tone, `C gamma_m` times the cavity filter at
/// its anti-Stokes sideband, as the lattice sees it.
pub fn optical_damping(params: &SystemParams, tone: &Tone) -> f64 {
    params.gamma_m * tone.cooperativity(params) * cavity_filter(params, sideband_center(params, tone))
}

fn cavity_filter(params: &SystemParams, x: f64) -> f64 {
    1.0 / (1.0 + (2.0 * x / params.kappa).powi(2))
}

/// Reduced occupancy `gamma_m n_th / gamma_tot`.
pub fn reduced_occupancy(params: &SystemParams, env: &EnvironmentParams, gamma_tot: f64) -> f64 {
    params.gamma_m * env.n_th / gamma_tot
}

/// Cavity-frame centre of the motional sideband scattered by `tone`.
pub fn sideband_center(params: &SystemParams, tone: &Tone) -> f64 {
    match tone.role {
        ToneRole::RedProbe | ToneRole::Cooling => tone.detuning + params.omega_m,
        ToneRole::BlueProbe => tone.detuning - params.omega_m,
    }
}

struct Peak {
    center: f64,
    /// Lorentzian area divided by `2 pi`.
    strength: f64,
}

fn ideal_peaks(
    params: &SystemParams,
    tones: &ToneSet,
    env: &EnvironmentParams,
    eta: f64,
    opts: IdealOptions,
) -> Result<(f64, Vec<(ToneRole, Peak)>)> {
    let gamma_tot = total_linewidth(params, tones, opts);
    if !(gamma_tot > 0.0) {
        return Err(Error::InvalidParams(format!(
            "non-positive total linewidth {gamma_tot:e}; probe anti-damping too strong"
        )));
    }
    let n_bar = reduced_occupancy(params, env, gamma_tot);
    let scale = eta * params.escape_efficiency() * params.gamma_m;
    let peaks = tones
        .tones
        .iter()
        .map(|t| {
            let occ = match t.role {
                ToneRole::BlueProbe => n_bar + 1.0,
                _ => n_bar,
            };
            (
                t.role,
                Peak {
                    center: sideband_center(params, t),
                    strength: scale * t.cooperativity(params) * occ,
                },
            )
        })
        .collect();
    Ok((gamma_tot, peaks))
}

/// Three Lorentzians on the shot-noise floor with a shared total linewidth.
pub fn ideal_spectrum(
    params: &SystemParams,
    tones: &ToneSet,
    env: &EnvironmentParams,
    det: &DetectionParams,
    grid: &[f64],
) -> Result<SpectrumTrace> {
    ideal_spectrum_with(params, tones, env, det, grid, IdealOptions::default())
}

pub fn ideal_spectrum_with(
    params: &SystemParams,
    tones: &ToneSet,
    env: &EnvironmentParams,
    det: &DetectionParams,
    grid: &[f64],
    opts: IdealOptions,
) -> Result<SpectrumTrace> {
    check_grid(grid)?;
    let eta = det.efficiency()?;
    let (gamma_tot, peaks) = ideal_peaks(params, tones, env, eta, opts)?;
    let hw2 = 0.25 * gamma_tot * gamma_tot;
    let values = evaluate_grid(grid, |x| {
        1.0 + peaks
            .iter()
            .map(|(_, p)| gamma_tot * p.strength / (hw2 + (x - p.center).powi(2)))
            .sum::<f64>()
    });
    let mut trace = shifted_trace(grid, values, det)?;
    for (i, (ri, a)) in peaks.iter().enumerate() {
        for (rj, b) in &peaks[i + 1..] {
            if (a.center - b.center).abs() < 3.0 * gamma_tot {
                trace.warnings.push(format!(
                    "{ri:?} and {rj:?} sidebands are closer than 3 gamma_tot"
                ));
            }
        }
    }
    Ok(trace)
}

/// Analytic sideband areas of the three-sideband model.
pub fn ideal_weights(
    params: &SystemParams,
    tones: &ToneSet,
    env: &EnvironmentParams,
    det: &DetectionParams,
    opts: IdealOptions,
) -> Result<SidebandWeights> {
    let eta = det.efficiency()?;
    let (_, peaks) = ideal_peaks(params, tones, env, eta, opts)?;
    let mut w = SidebandWeights::default();
    for (role, p) in peaks {
        let area = 2.0 * std::f64::consts::PI * p.strength;
        match role {
            ToneRole::RedProbe => w.red = area,
            ToneRole::Cooling => w.cooling = area,
            ToneRole::BlueProbe => w.blue = area,
        }
    }
    Ok(w)
}

fn shifted_trace(grid: &[f64], values: Vec<f64>, det: &DetectionParams) -> Result<SpectrumTrace> {
    let axis = grid.iter().map(|x| x + det.delta_lo).collect();
    SpectrumTrace::new(axis, values, Normalization::ShotNoiseNormalized)
}

/// Cooperativities corrected for the lagging modulation.
pub fn modified_cooperativities(
    c_red: f64,
    c_cool: f64,
    g_r: f64,
    g_c: f64,
    delta_k: Complex64,
    kappa: f64,
) -> Result<(f64, f64)> {
    if !(g_r > 0.0 && g_c > 0.0) {
        return Err(Error::Domain("g_r and g_c must be positive".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::Domain("kappa must be positive".into()));
    }
    let fr = (1.0 - 2.0 * I * g_c * delta_k / (g_r * kappa)).norm_sqr();
    let fc = (1.0 - 2.0 * I * g_r * delta_k.conj() / (g_c * kappa)).norm_sqr();
    Ok((c_red * fr, c_cool * fc))
}

/// Exact solution of the three-mode system `{a_0, b_0, a_{-1}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeMode {
    pub coeffs: LatticeCoefficients,
    pub cavity: CavityResponse,
}

impl ThreeMode {
    pub fn new(coeffs: LatticeCoefficients, cavity: CavityResponse) -> Self {
        Self { coeffs, cavity }
    }

    /// Responses of `a_0` and `a_{-1}` to the mechanical input at lattice
    /// frequency `omega`, including the `sqrt(gamma_m)` input factor.
    ///
    /// Eliminating the two optical modes gives numerators
    /// `g_r - i g_c delta_k chi_opt(w + omega_mod)` and
    /// `g_c - i g_r delta_k* chi_opt(w)`, each times the respective
    /// optical susceptibility, over the dressed mechanical denominator.
    pub fn mechanical_transfer(&self, omega: f64) -> (Complex64, Complex64) {
        let c = &self.coeffs;
        let a = c.optical_inverse(self.cavity, omega, 0);
        let cc = c.optical_inverse(self.cavity, omega, -1);
        let b = c.mechanical_inverse(omega, 0);
        let dk = c.delta_k;
        let d = a * cc + dk.norm_sqr();
        let q = d * b + c.g_r * c.g_r * cc + c.g_c * c.g_c * a
            - I * c.g_r * c.g_c * (dk + dk.conj());
        let n_r = c.g_r * cc - I * c.g_c * dk;
        let n_c = c.g_c * a - I * c.g_r * dk.conj();
        let s = I * c.gamma_m.sqrt() / q;
        (s * n_r, s * n_c)
    }

    /// Normal-ordered spectrum at cavity-frame frequency `x`.
    pub fn normal_ordered(&self, n_th: f64, x: f64) -> f64 {
        let c = &self.coeffs;
        let (t_r, _) = self.mechanical_transfer(c.lattice_frequency(x, 0));
        let (_, t_c) = self.mechanical_transfer(c.lattice_frequency(x, -1));
        c.kappa_ex * n_th * (t_r.norm_sqr() + t_c.norm_sqr())
    }

    /// Normal-ordered areas `(w_r, w_c)` of the two principal sidebands.
    pub fn weights(&self, n_th: f64) -> (f64, f64) {
        self.weights_with_nodes(n_th, DEFAULT_WEIGHT_NODES)
    }

    /// [`Self::weights`] with an explicit quadrature size.
    pub fn weights_with_nodes(&self, n_th: f64, nodes: usize) -> (f64, f64) {
        let c = &self.coeffs;
        let rule = real_line_rule(0.0, 0.5 * c.linewidth_estimate(), nodes);
        let (mut wr, mut wc) = (0.0, 0.0);
        for (w, h) in rule {
            let (tr, tc) = self.mechanical_transfer(w);
            wr += h * tr.norm_sqr();
            wc += h * tc.norm_sqr();
        }
        let s = c.kappa_ex * n_th;
        (s * wr, s * wc)
    }
}

/// Two red-side tones with the lagging modulation, three-mode closed form.
pub fn three_mode_spectrum(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    det: &DetectionParams,
    grid: &[f64],
) -> Result<SpectrumTrace> {
    three_mode_spectrum_with(params, tones, kerr, env, det, grid, CavityResponse::Exact)
}

pub fn three_mode_spectrum_with(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    det: &DetectionParams,
    grid: &[f64],
    cavity: CavityResponse,
) -> Result<SpectrumTrace> {
    check_grid(grid)?;
    let eta = det.efficiency()?;
    if tones.get(ToneRole::RedProbe).is_none() || tones.get(ToneRole::Cooling).is_none() {
        return Err(Error::InvalidParams(
            "the three-mode spectrum needs a red probe and a cooling tone".into(),
        ));
    }
    let model = ThreeMode::new(LatticeCoefficients::from_model(params, tones, kerr)?, cavity);
    let values = evaluate_grid(grid, |x| 1.0 + eta * model.normal_ordered(env.n_th, x));
    shifted_trace(grid, values, det)
}

/// Heterodyne spectrum for any tone set.
///
/// The red probe and cooling tone go through the converged lattice; a blue
/// probe is treated as weak: its anti-damping is neglected and its Stokes
/// sideband, weight `C_blue (n_bar + 1)` times the cavity filter, is added as
/// a Lorentzian whose width is the intrinsic linewidth plus the
/// [`optical_damping`] of the other tones.
pub fn composite_spectrum(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    det: &DetectionParams,
    grid: &[f64],
    rel_tol: f64,
) -> Result<SpectrumTrace> {
    check_grid(grid)?;
    let eta = det.efficiency()?;
    let lattice_tones: Vec<Tone> = tones
        .tones
        .iter()
        .filter(|t| t.role != ToneRole::BlueProbe)
        .cloned()
        .collect();
    let mut values = if lattice_tones.is_empty() {
        vec![0.0; grid.len()]
    } else {
        let set = ToneSet::new(lattice_tones, params)?;
        converged_spectrum(params, &set, kerr, env, grid, rel_tol)?.0.values
    };
    let mut warnings = Vec::new();
    if let Some(blue) = tones.get(ToneRole::BlueProbe) {
        let gamma_tot = params.gamma_m
            + tones
                .tones
                .iter()
                .filter(|t| t.role != ToneRole::BlueProbe)
                .map(|t| optical_damping(params, t))
                .sum::<f64>();
        let n_bar = reduced_occupancy(params, env, gamma_tot);
        let center = sideband_center(params, blue);
        let filter = cavity_filter(params, center);
        let strength = params.escape_efficiency()
            * params.gamma_m
            * blue.cooperativity(params)
            * filter
            * (n_bar + 1.0);
        let hw2 = 0.25 * gamma_tot * gamma_tot;
        for (v, &x) in values.iter_mut().zip(grid) {
            *v += gamma_tot * strength / (hw2 + (x - center).powi(2));
        }
        warnings.push("blue sideband composed analytically".to_string());
    }
    let values = values.iter().map(|s| 1.0 + eta * s).collect();
    let mut trace = shifted_trace(grid, values, det)?;
    trace.warnings = warnings;
    Ok(trace)
}

/// Which motional sideband a single tone produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Red,
    Blue,
}

/// Exact single-tone spectrum including the optical spring and damping.
///
/// Red: `kappa_ex g^2 gamma_m n_th |chi_opt|^2 / |chi_m^{-1} + g^2 chi_opt|^2`.
/// Blue: the same with `n_th + 1` and anti-damping `- g^2 chi_opt`.
pub fn single_tone_spectrum(
    params: &SystemParams,
    tone: &Tone,
    env: &EnvironmentParams,
    det: &DetectionParams,
    grid: &[f64],
    side: Side,
) -> Result<SpectrumTrace> {
    check_grid(grid)?;
    let eta = det.efficiency()?;
    let g = tone.coupling(params);
    let g2 = g * g;
    let (sign, occ, residual) = match side {
        Side::Red => (1.0, env.n_th, params.omega_m + tone.detuning),
        Side::Blue => {
            if tone.cooperativity(params) >= 1.0 {
                return Err(Error::Unstable(
                    "blue-detuned cooperativity >= 1 drives parametric instability".into(),
                ));
            }
            (-1.0, env.n_th + 1.0, tone.detuning - params.omega_m)
        }
    };
    let chi = Susceptibilities {
        kappa: params.kappa,
        residual,
        gamma_m: params.gamma_m,
        gamma_tot: params.gamma_m,
    };
    let pre = eta * params.kappa_ex * g2 * params.gamma_m * occ;
    let values = evaluate_grid(grid, |x| {
        let w = x - residual;
        let xo = chi.chi_opt(w);
        let den = 1.0 / chi.chi_m(w) + sign * g2 * xo;
        1.0 + pre * xo.norm_sqr() / den.norm_sqr()
    });
    shifted_trace(grid, values, det)
}

/// Cooling-to-probe weight ratio versus modulation frequency, normalized to
/// the same ratio without the nonlinearity.
///
/// Both tones carry `n_c` photons and sit exactly on the lower sideband
/// (red probe) and `omega_mod` above it (cooling tone).
pub fn normalized_peak_ratio(
    params: &SystemParams,
    kerr: &KerrModel,
    n_c: f64,
    omega_mod_grid: &[f64],
) -> Result<Vec<f64>> {
    normalized_peak_ratio_with(params, kerr, n_c, omega_mod_grid, CavityResponse::Exact)
}

pub fn normalized_peak_ratio_with(
    params: &SystemParams,
    kerr: &KerrModel,
    n_c: f64,
    omega_mod_grid: &[f64],
    cavity: CavityResponse,
) -> Result<Vec<f64>> {
    let model = PeakRatioModel::new(params, n_c, omega_mod_grid, cavity, DEFAULT_WEIGHT_NODES)?;
    model.evaluate(kerr)
}

/// Precomputed pieces of [`normalized_peak_ratio`] for repeated evaluation
/// with different nonlinearities, as in a fit.
#[derive(Debug, Clone)]
pub struct PeakRatioModel {
    bases: Vec<LatticeCoefficients>,
    baseline: Vec<f64>,
    amplitude: f64,
    cavity: CavityResponse,
    nodes: usize,
}

impl PeakRatioModel {
    pub fn new(
        params: &SystemParams,
        n_c: f64,
        omega_mod_grid: &[f64],
        cavity: CavityResponse,
        nodes: usize,
    ) -> Result<Self> {
        if !(n_c.is_finite() && n_c > 0.0) {
            return Err(Error::Domain(format!("n_c must be positive, got {n_c}")));
        }
        let g = params.g0 * n_c.sqrt();
        let mut bases = Vec::with_capacity(omega_mod_grid.len());
        let mut baseline = Vec::with_capacity(omega_mod_grid.len());
        for &om in omega_mod_grid {
            if !(om.is_finite() && om > 0.0) {
                return Err(Error::Domain(format!("omega_mod must be positive, got {om}")));
            }
            let base = LatticeCoefficients {
                kappa: params.kappa,
                kappa_ex: params.kappa_ex,
                gamma_m: params.gamma_m,
                residual: 0.0,
                omega_mod: om,
                g_r: g,
                g_c: g,
                delta_k: Complex64::new(0.0, 0.0),
            };
            let (r0, c0) = ThreeMode::new(base, cavity).weights_with_nodes(1.0, nodes);
            bases.push(base);
            baseline.push(c0 / r0);
        }
        Ok(Self {
            bases,
            baseline,
            amplitude: n_c.sqrt(),
            cavity,
            nodes,
        })
    }

    pub fn evaluate(&self, kerr: &KerrModel) -> Result<Vec<f64>> {
        self.bases
            .iter()
            .zip(&self.baseline)
            .map(|(base, b)| {
                let dk = kerr.modulation_amplitude(self.amplitude, self.amplitude, base.omega_mod)?;
                let (r1, c1) =
                    ThreeMode::new(base.with_delta_k(dk), self.cavity).weights_with_nodes(1.0, self.nodes);
                Ok((c1 / r1) / b)
            })
            .collect()
    }
}
