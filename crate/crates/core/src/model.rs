//! Physical parameters and closed-form scalar quantities.
//!
//! Every rate and frequency in this module is angular (rad/s). Configuration
//! front ends read ordinary frequencies in Hz and convert with [`hz`] exactly
//! once.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure_finite, Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz(nu: f64) -> f64 {
    2.0 * PI * nu
}

/// Converts an angular frequency in rad/s to an ordinary frequency in Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Fixed cavity and oscillator constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Total optical linewidth.
    pub kappa: f64,
    /// External (input mirror) coupling rate.
    pub kappa_ex: f64,
    /// Mechanical frequency.
    pub omega_m: f64,
    /// Bare mechanical damping, including gas damping, excluding optical backaction.
    pub gamma_m: f64,
    /// Vacuum optomechanical coupling.
    pub g0: f64,
    /// Optical resonance; only needed for the intrinsic Kerr estimate.
    pub omega_cav: Option<f64>,
}

impl SystemParams {
    pub fn new(kappa: f64, kappa_ex: f64, omega_m: f64, gamma_m: f64, g0: f64) -> Result<Self> {
        let p = Self {
            kappa,
            kappa_ex,
            omega_m,
            gamma_m,
            g0,
            omega_cav: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_omega_cav(mut self, omega_cav: f64) -> Result<Self> {
        if !(omega_cav.is_finite() && omega_cav > 0.0) {
            return Err(Error::InvalidParams(format!(
                "omega_cav must be positive, got {omega_cav}"
            )));
        }
        self.omega_cav = Some(omega_cav);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("kappa_ex", self.kappa_ex),
            ("omega_m", self.omega_m),
            ("gamma_m", self.gamma_m),
            ("g0", self.g0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.kappa_ex > self.kappa {
            return Err(Error::InvalidParams(format!(
                "kappa_ex ({}) exceeds kappa ({})",
                self.kappa_ex, self.kappa
            )));
        }
        Ok(())
    }

    /// True when the mechanical frequency exceeds the cavity linewidth.
    pub fn resolved_sideband(&self) -> bool {
        self.omega_m > self.kappa
    }

    /// Fraction of intracavity loss that leaves through the detected port.
    pub fn escape_efficiency(&self) -> f64 {
        self.kappa_ex / self.kappa
    }

    /// Single-photon cooperativity `4 g0^2 / (kappa gamma_m)`.
    pub fn single_photon_cooperativity(&self) -> f64 {
        4.0 * self.g0 * self.g0 / (self.kappa * self.gamma_m)
    }

    /// Non-fatal invariant violations.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.gamma_m > self.kappa / 100.0 {
            w.push(format!(
                "gamma_m ({:e}) is not much smaller than kappa ({:e})",
                self.gamma_m, self.kappa
            ));
        }
        w
    }
}

/// Which job a laser tone does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToneRole {
    RedProbe,
    BlueProbe,
    Cooling,
}

impl ToneRole {
    fn is_red_side(self) -> bool {
        matches!(self, ToneRole::RedProbe | ToneRole::Cooling)
    }
}

/// One applied laser tone.
#[derive(Debug, Clone, PartialEq)]
pub struct Tone {
    pub role: ToneRole,
    /// Laser detuning from the optical resonance.
    pub detuning: f64,
    /// Mean intracavity photon number.
    pub n_photons: f64,
}

impl Tone {
    pub fn new(role: ToneRole, detuning: f64, n_photons: f64) -> Result<Self> {
        ensure_finite("detuning", detuning)?;
        if !(n_photons.is_finite() && n_photons >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "n_photons must be non-negative, got {n_photons}"
            )));
        }
        Ok(Self {
            role,
            detuning,
            n_photons,
        })
    }

    /// Classical intracavity amplitude, taken real and non-negative.
    pub fn amplitude(&self) -> f64 {
        self.n_photons.sqrt()
    }

    /// Light-enhanced coupling `g0 sqrt(n)`.
    pub fn coupling(&self, params: &SystemParams) -> f64 {
        params.g0 * self.amplitude()
    }

    pub fn cooperativity(&self, params: &SystemParams) -> f64 {
        let g = self.coupling(params);
        4.0 * g * g / (params.kappa * params.gamma_m)
    }

    /// Offset of the tone from the motional sideband it addresses.
    pub fn residual_detuning(&self, params: &SystemParams) -> f64 {
        if self.role.is_red_side() {
            params.omega_m + self.detuning
        } else {
            self.detuning - params.omega_m
        }
    }
}

/// The set of applied tones, with the derived lattice frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneSet {
    pub tones: Vec<Tone>,
    /// Spacing between the cooling tone and the red probe.
    pub omega_mod: f64,
    /// Offset of the red-side probe from the lower motional sideband.
    pub delta_probe: f64,
    /// `omega_m + detuning` of the tone that defines the lattice frame.
    pub residual_detuning: f64,
}

impl ToneSet {
    pub fn new(tones: Vec<Tone>, params: &SystemParams) -> Result<Self> {
        for (i, t) in tones.iter().enumerate() {
            if tones[..i].iter().any(|u| u.role == t.role) {
                return Err(Error::InvalidParams(format!(
                    "more than one {:?} tone",
                    t.role
                )));
            }
            let off = t.residual_detuning(params);
            if off.abs() >= params.kappa {
                return Err(Error::InvalidParams(format!(
                    "{:?} tone detuning {:e} is not within kappa of its motional sideband",
                    t.role, t.detuning
                )));
            }
        }
        let mut set = Self {
            tones,
            omega_mod: 0.0,
            delta_probe: 0.0,
            residual_detuning: 0.0,
        };
        if let (Some(r), Some(c)) = (set.get(ToneRole::RedProbe), set.get(ToneRole::Cooling)) {
            set.omega_mod = c.detuning - r.detuning;
            if set.omega_mod <= 10.0 * params.gamma_m {
                return Err(Error::InvalidParams(format!(
                    "omega_mod ({:e}) must exceed 10 gamma_m ({:e})",
                    set.omega_mod,
                    10.0 * params.gamma_m
                )));
            }
        }
        if let Some(frame) = set.frame_tone() {
            set.residual_detuning = frame.residual_detuning(params);
            set.delta_probe = -set.residual_detuning;
        }
        Ok(set)
    }

    pub fn get(&self, role: ToneRole) -> Option<&Tone> {
        self.tones.iter().find(|t| t.role == role)
    }

    /// The red-side tone whose sideband sits at lattice index 0: the red
    /// probe when present, otherwise the cooling tone.
    pub fn frame_tone(&self) -> Option<&Tone> {
        self.get(ToneRole::RedProbe)
            .or_else(|| self.get(ToneRole::Cooling))
    }

    /// The red-side tone at lattice offset `+omega_mod`, if two are present.
    pub fn shifted_tone(&self) -> Option<&Tone> {
        self.get(ToneRole::RedProbe)
            .and(self.get(ToneRole::Cooling))
    }

    /// `(a_c, a_r)` amplitudes entering the cavity frequency modulation.
    pub fn beat_amplitudes(&self) -> (f64, f64) {
        match (self.get(ToneRole::Cooling), self.get(ToneRole::RedProbe)) {
            (Some(c), Some(r)) => (c.amplitude(), r.amplitude()),
            _ => (0.0, 0.0),
        }
    }

    pub fn cooperativity(&self, role: ToneRole, params: &SystemParams) -> f64 {
        self.get(role).map_or(0.0, |t| t.cooperativity(params))
    }
}

/// Thermal (photothermorefractive) and instantaneous Kerr parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KerrModel {
    /// Thermalization rate.
    pub gamma_th: f64,
    /// Product of absorption rate and thermo-refractive shift, (rad/s)^2.
    pub g_product: f64,
    /// Instantaneous Kerr shift per photon; may be negative.
    pub g_kerr: f64,
}

impl KerrModel {
    pub fn new(gamma_th: f64, g_product: f64, g_kerr: f64) -> Result<Self> {
        if !(gamma_th.is_finite() && gamma_th > 0.0) {
            return Err(Error::InvalidParams(format!(
                "gamma_th must be positive, got {gamma_th}"
            )));
        }
        if !(g_product.is_finite() && g_product >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "g_product must be non-negative, got {g_product}"
            )));
        }
        ensure_finite("g_kerr", g_kerr)?;
        Ok(Self {
            gamma_th,
            g_product,
            g_kerr,
        })
    }

    /// A model with no nonlinearity at all.
    pub fn none() -> Self {
        Self {
            gamma_th: 1.0,
            g_product: 0.0,
            g_kerr: 0.0,
        }
    }

    /// Complex coupling between adjacent optical Fourier modes: the thermal
    /// part plus the lag-free instantaneous Kerr part `g_kerr a_c a_r`.
    pub fn modulation_amplitude(&self, a_c: f64, a_r: f64, omega_mod: f64) -> Result<Complex64> {
        Ok(delta_k(self, a_c, a_r, omega_mod)? + self.g_kerr * a_c * a_r)
    }

    pub fn modulation_for(&self, tones: &ToneSet) -> Result<Complex64> {
        let (a_c, a_r) = tones.beat_amplitudes();
        self.modulation_amplitude(a_c, a_r, tones.omega_mod)
    }
}

/// Bath occupancy and absorption heating.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentParams {
    pub n_th: f64,
    /// Extra bath phonons per intracavity photon.
    pub alpha_heating: f64,
    pub pressure_label: String,
}

impl EnvironmentParams {
    pub fn new(n_th: f64, alpha_heating: f64) -> Result<Self> {
        if !(n_th.is_finite() && n_th >= 0.0) {
            return Err(Error::InvalidParams(format!("n_th must be >= 0, got {n_th}")));
        }
        if !(alpha_heating.is_finite() && alpha_heating >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "alpha_heating must be >= 0, got {alpha_heating}"
            )));
        }
        Ok(Self {
            n_th,
            alpha_heating,
            pressure_label: String::new(),
        })
    }
}

/// Heterodyne detection settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionParams {
    /// Overall detection efficiency, if calibrated.
    pub eta: Option<f64>,
    /// Local oscillator detuning from the cavity.
    pub delta_lo: f64,
}

impl DetectionParams {
    pub fn new(eta: f64, delta_lo: f64) -> Result<Self> {
        check_eta(eta)?;
        ensure_finite("delta_lo", delta_lo)?;
        Ok(Self {
            eta: Some(eta),
            delta_lo,
        })
    }

    pub fn uncalibrated(delta_lo: f64) -> Self {
        Self {
            eta: None,
            delta_lo,
        }
    }

    pub fn efficiency(&self) -> Result<f64> {
        let eta = self
            .eta
            .ok_or_else(|| Error::CalibrationRequired("detection efficiency is not set".into()))?;
        check_eta(eta)?;
        Ok(eta)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("eta must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// Thermal lag `atan(omega_mod / gamma_th)` in `[0, pi/2)`.
pub fn phase_lag(gamma_th: f64, omega_mod: f64) -> Result<f64> {
    ensure_finite("gamma_th", gamma_th)?;
    ensure_finite("omega_mod", omega_mod)?;
    if gamma_th <= 0.0 {
        return Err(Error::Domain(format!("gamma_th must be positive, got {gamma_th}")));
    }
    if omega_mod < 0.0 {
        return Err(Error::Domain(format!("omega_mod must be >= 0, got {omega_mod}")));
    }
    Ok((omega_mod / gamma_th).atan())
}

/// Complex amplitude of the cavity frequency modulation at `omega_mod`
/// produced by the beat of two intracavity fields through the thermal
/// low-pass response.
pub fn delta_k(kerr: &KerrModel, a_c: f64, a_r: f64, omega_mod: f64) -> Result<Complex64> {
    ensure_finite("a_c", a_c)?;
    ensure_finite("a_r", a_r)?;
    if a_c < 0.0 || a_r < 0.0 {
        return Err(Error::Domain("amplitudes must be non-negative".into()));
    }
    let lag = phase_lag(kerr.gamma_th, omega_mod)?;
    let modulus = kerr.g_product * a_c * a_r / kerr.gamma_th.hypot(omega_mod);
    Ok(Complex64::from_polar(modulus, -lag))
}

/// Static thermal cavity shift per mean intracavity photon.
pub fn static_thermal_shift(kerr: &KerrModel) -> Result<f64> {
    if !(kerr.gamma_th > 0.0) {
        return Err(Error::Domain("gamma_th must be positive".into()));
    }
    Ok(kerr.g_product / kerr.gamma_th)
}

/// Intrinsic Kerr shift per photon from the material nonlinearity.
///
/// `n2` in m^2/W, `v_mode` in m^3, `omega_cav` in rad/s.
pub fn kerr_coupling_estimate(n0: f64, n2: f64, v_mode: f64, omega_cav: f64) -> Result<f64> {
    for (name, v) in [("n0", n0), ("n2", n2), ("v_mode", v_mode), ("omega_cav", omega_cav)] {
        ensure_finite(name, v)?;
    }
    if n0 <= 0.0 {
        return Err(Error::Domain(format!("n0 must be positive, got {n0}")));
    }
    if v_mode <= 0.0 {
        return Err(Error::Domain(format!("v_mode must be positive, got {v_mode}")));
    }
    Ok(-omega_cav * (n2 / n0) * (HBAR * omega_cav * SPEED_OF_LIGHT) / (v_mode * n0))
}

/// Cooperativity `4 g^2 / (kappa gamma_m)`.
pub fn cooperativity(g: f64, kappa: f64, gamma_m: f64) -> Result<f64> {
    ensure_finite("g", g)?;
    if !(kappa > 0.0 && gamma_m > 0.0) || !kappa.is_finite() || !gamma_m.is_finite() {
        return Err(Error::Domain("kappa and gamma_m must be positive".into()));
    }
    Ok(4.0 * g * g / (kappa * gamma_m))
}

/// Light-enhanced coupling `g0 sqrt(n_c)`.
pub fn enhanced_coupling(g0: f64, n_c: f64) -> Result<f64> {
    ensure_finite("g0", g0)?;
    if !(n_c >= 0.0) || !n_c.is_finite() {
        return Err(Error::Domain(format!("n_c must be non-negative, got {n_c}")));
    }
    Ok(g0 * n_c.sqrt())
}

/// Time-dependent part of the thermal cavity shift at time `t`,
/// `2 Re[delta_k e^{i omega_mod t}]`.
pub fn thermal_response_waveform(
    kerr: &KerrModel,
    a_c: f64,
    a_r: f64,
    omega_mod: f64,
    t: f64,
) -> Result<f64> {
    ensure_finite("t", t)?;
    let dk = delta_k(kerr, a_c, a_r, omega_mod)?;
    Ok(2.0 * (dk * Complex64::from_polar(1.0, omega_mod * t)).re)
}
