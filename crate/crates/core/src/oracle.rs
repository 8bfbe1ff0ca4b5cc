//! Time-domain cross-check of the Fourier lattice.
//!
//! Integrates the linearized, modulated equations of motion under a unit
//! coherent drive and projects the periodic steady state onto harmonics of
//! the modulation. No matrix truncation is involved, so agreement with the
//! lattice solver tests both the lattice couplings and its truncation.
//!
//! With `y = x e^{i w t}` and `p = e^{i Omega t}`:
//!
//! ```text
//! y_a' = (-kappa/2 + i residual + i w) y_a + i (g_r + g_c p*) y_b
//!        - i (dk* p* + dk p) y_a + sqrt(kappa) [optical drive]
//! y_b' = (-gamma_m/2 + i w) y_b + i (g_r + g_c p) y_a + sqrt(gamma_m) [mechanical drive]
//! ```
//!
//! The steady state is located by periodic shooting over one modulation
//! period (monodromy matrix), then confirmed by integrating further periods
//! and checking that consecutive projections agree.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::floquet::{Channel, LatticeCoefficients, Species};
use crate::model::{EnvironmentParams, KerrModel, SystemParams, ToneSet};
use crate::spectrum::{check_grid, try_map_indices, Normalization, SpectrumTrace};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest tolerated change between consecutive projection windows.
pub const MAX_SETTLING_DRIFT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Periods integrated from the shooting solution before sampling.
    pub settle_periods: usize,
    /// Periods projected; consecutive windows must agree.
    pub sample_periods: usize,
    /// RK4 step as a fraction of the fastest rate in the equations.
    pub step_fraction: f64,
    /// Largest `|n|` returned.
    pub harmonics: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            settle_periods: 1,
            sample_periods: 2,
            step_fraction: 0.01,
            harmonics: 4,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_fraction > 0.0 && self.step_fraction <= 0.01) {
            return Err(Error::Config(format!(
                "step_fraction must lie in (0, 0.01], got {}",
                self.step_fraction
            )));
        }
        if self.sample_periods < 2 {
            return Err(Error::Config(
                "sample_periods must be at least 2 to measure drift".into(),
            ));
        }
        Ok(())
    }
}

/// Steady-state harmonic amplitudes for one drive frequency and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicResponse {
    pub omega: f64,
    pub channel: Channel,
    /// Harmonic indices, ascending.
    pub indices: Vec<i32>,
    pub optical: Vec<Complex64>,
    pub mechanical: Vec<Complex64>,
    /// Largest relative change between consecutive sample windows.
    pub drift: f64,
}

impl HarmonicResponse {
    pub fn get(&self, species: Species, n: i32) -> Option<Complex64> {
        let k = self.indices.iter().position(|&i| i == n)?;
        Some(match species {
            Species::Optical => self.optical[k],
            Species::Mechanical => self.mechanical[k],
        })
    }
}

type State = [Complex64; 2];

/// The modulated equations of motion for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSystem {
    coeffs: LatticeCoefficients,
}

impl OracleSystem {
    pub fn new(coeffs: LatticeCoefficients) -> Self {
        Self { coeffs }
    }

    pub fn from_model(params: &SystemParams, tones: &ToneSet, kerr: &KerrModel) -> Result<Self> {
        Ok(Self::new(LatticeCoefficients::from_model(params, tones, kerr)?))
    }

    pub fn coefficients(&self) -> &LatticeCoefficients {
        &self.coeffs
    }

    fn modulated(&self) -> bool {
        self.coeffs.omega_mod > 0.0
    }

    /// Period and step count for drive frequency `omega`.
    fn discretization(&self, omega: f64, step_fraction: f64) -> (f64, usize) {
        let c = &self.coeffs;
        let rate = 0.5 * c.kappa
            + 0.5 * c.gamma_m
            + c.residual.abs()
            + omega.abs()
            + 2.0 * c.delta_k.norm()
            + c.g_r
            + c.g_c
            + c.omega_mod;
        let h = step_fraction / rate;
        let period = if self.modulated() {
            2.0 * std::f64::consts::PI / c.omega_mod
        } else {
            // Any period works without modulation; this one keeps the
            // shooting system well conditioned at modest cost.
            2e4 * h
        };
        (period, (period / h).ceil() as usize)
    }

    fn derivative(&self, omega: f64, p: Complex64, y: &State, drive: &State) -> State {
        let c = &self.coeffs;
        let a_diag = Complex64::new(-0.5 * c.kappa, c.residual + omega)
            - I * (c.delta_k.conj() * p.conj() + c.delta_k * p);
        let b_diag = Complex64::new(-0.5 * c.gamma_m, omega);
        [
            a_diag * y[0] + I * (c.g_r + c.g_c * p.conj()) * y[1] + drive[0],
            b_diag * y[1] + I * (c.g_r + c.g_c * p) * y[0] + drive[1],
        ]
    }

    /// Integrates every state in `states` over one period starting at phase
    /// zero. `drives[k]` is the constant drive of state `k`. When `project`
    /// is given, accumulates `(1/N) sum y(t_j) e^{-i n Omega t_j}` for the
    /// requested harmonics of the first state.
    fn integrate_period(
        &self,
        omega: f64,
        n_steps: usize,
        h: f64,
        states: &mut [State],
        drives: &[State],
        mut project: Option<(&[i32], &mut [State])>,
    ) {
        let half = Complex64::from_polar(1.0, 0.5 * self.coeffs.omega_mod * h);
        let mut p = Complex64::new(1.0, 0.0);
        for j in 0..n_steps {
            if let Some((idx, acc)) = project.as_mut() {
                let y = states[0];
                let (mut w, mut last) = (p.powi(-idx[0]), idx[0]);
                for (k, &n) in idx.iter().enumerate() {
                    if n != last {
                        w = if n == last + 1 { w * p.conj() } else { p.powi(-n) };
                        last = n;
                    }
                    acc[k][0] += y[0] * w;
                    acc[k][1] += y[1] * w;
                }
            }
            let pm = p * half;
            let pe = pm * half;
            for (y, d) in states.iter_mut().zip(drives) {
                let k1 = self.derivative(omega, p, y, d);
                let y2 = [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]];
                let k2 = self.derivative(omega, pm, &y2, d);
                let y3 = [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]];
                let k3 = self.derivative(omega, pm, &y3, d);
                let y4 = [y[0] + h * k3[0], y[1] + h * k3[1]];
                let k4 = self.derivative(omega, pe, &y4, d);
                for i in 0..2 {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            p = pe;
            if j % 1024 == 1023 {
                p /= p.norm();
            }
        }
        if let Some((_, acc)) = project {
            let scale = 1.0 / n_steps as f64;
            for a in acc.iter_mut() {
                a[0] *= scale;
                a[1] *= scale;
            }
        }
    }

    /// Steady-state harmonics under a unit drive `e^{-i omega t}` on `channel`.
    pub fn transfer(
        &self,
        omega: f64,
        channel: Channel,
        config: &OracleConfig,
    ) -> Result<HarmonicResponse> {
        let hmax = config.harmonics as i32;
        let indices: Vec<i32> = if self.modulated() {
            (-hmax - 1..=hmax).collect()
        } else {
            vec![0]
        };
        self.driven_response(omega, channel, config, 1.0, &indices)
    }

    fn driven_response(
        &self,
        omega: f64,
        channel: Channel,
        config: &OracleConfig,
        amplitude: f64,
        indices: &[i32],
    ) -> Result<HarmonicResponse> {
        config.validate()?;
        if !omega.is_finite() {
            return Err(Error::Domain(format!("non-finite drive frequency {omega}")));
        }
        let c = &self.coeffs;
        let (period, n_steps) = self.discretization(omega, config.step_fraction);
        let h = period / n_steps as f64;
        let drive: State = match channel {
            Channel::OpticalIn => [Complex64::new(amplitude * c.kappa.sqrt(), 0.0), ZERO],
            Channel::MechanicalIn => [ZERO, Complex64::new(amplitude * c.gamma_m.sqrt(), 0.0)],
        };

        // Monodromy matrix and the driven response from rest.
        let one = Complex64::new(1.0, 0.0);
        let mut shoot = [[one, ZERO], [ZERO, one], [ZERO, ZERO]];
        self.integrate_period(omega, n_steps, h, &mut shoot, &[[ZERO; 2], [ZERO; 2], drive], None);
        let [col0, col1, q] = shoot;
        let (m00, m10, m01, m11) = (col0[0], col0[1], col1[0], col1[1]);

        let tr = m00 + m11;
        let det = m00 * m11 - m01 * m10;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let radius = ((tr + disc) * 0.5).norm().max(((tr - disc) * 0.5).norm());
        if !(radius < 1.0) {
            return Err(Error::Unstable(format!(
                "Floquet multiplier of modulus {radius:.6} at omega = {omega:.6e}"
            )));
        }

        // (I - M) y0 = q
        let (a, b, cc, d) = (one - m00, -m01, -m10, one - m11);
        let det_s = a * d - b * cc;
        let mut y = [(d * q[0] - b * q[1]) / det_s, (a * q[1] - cc * q[0]) / det_s];

        for _ in 0..config.settle_periods {
            let mut s = [y];
            self.integrate_period(omega, n_steps, h, &mut s, &[drive], None);
            y = s[0];
        }

        let mut prev: Option<Vec<State>> = None;
        let mut drift = 0.0f64;
        for _ in 0..config.sample_periods {
            let mut acc = vec![[ZERO; 2]; indices.len()];
            let mut s = [y];
            self.integrate_period(omega, n_steps, h, &mut s, &[drive], Some((indices, &mut acc)));
            y = s[0];
            if let Some(p) = &prev {
                let scale = acc
                    .iter()
                    .flat_map(|v| v.iter().map(|z| z.norm()))
                    .fold(0.0, f64::max)
                    // drift of a weak harmonic is judged against the full state
                    .max(y[0].norm().max(y[1].norm()))
                    .max(f64::MIN_POSITIVE);
                let change = acc
                    .iter()
                    .zip(p)
                    .flat_map(|(u, v)| [(u[0] - v[0]).norm(), (u[1] - v[1]).norm()])
                    .fold(0.0, f64::max);
                drift = drift.max(change / scale);
            }
            prev = Some(acc);
        }
        if drift > MAX_SETTLING_DRIFT {
            return Err(Error::Settling { drift });
        }
        let acc = prev.expect("at least two sample periods");
        Ok(HarmonicResponse {
            omega,
            channel,
            indices: indices.to_vec(),
            optical: acc.iter().map(|v| v[0]).collect(),
            mechanical: acc.iter().map(|v| v[1]).collect(),
            drift,
        })
    }

    /// Normal-ordered output spectrum at cavity-frame frequencies `grid`,
    /// summing optical harmonics `-harmonics-1 ..= harmonics`.
    pub fn normal_ordered(&self, n_th: f64, grid: &[f64], config: &OracleConfig) -> Result<Vec<f64>> {
        check_grid(grid)?;
        config.validate()?;
        let c = self.coeffs;
        let scale = c.kappa_ex * n_th;
        if scale == 0.0 {
            return Ok(vec![0.0; grid.len()]);
        }
        let hmax = config.harmonics as i32;
        let indices: Vec<i32> = if self.modulated() {
            (-hmax - 1..=hmax).collect()
        } else {
            vec![0]
        };
        let m = indices.len();
        let terms = try_map_indices(grid.len() * m, |k| {
            let x = grid[k / m];
            let n = indices[k % m];
            let r = self.driven_response(c.lattice_frequency(x, n), Channel::MechanicalIn, config, 1.0, &[n])?;
            Ok(r.get(Species::Optical, n).map_or(0.0, |z| z.norm_sqr()))
        })?;
        Ok(terms.chunks(m).map(|t| scale * t.iter().sum::<f64>()).collect())
    }
}

/// Harmonic amplitudes of the modulated system driven at `omega` on `channel`.
pub fn time_domain_transfer(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    omega: f64,
    channel: Channel,
    config: &OracleConfig,
) -> Result<HarmonicResponse> {
    OracleSystem::from_model(params, tones, kerr)?.transfer(omega, channel, config)
}

/// Normal-ordered spectrum assembled from time-domain transfers.
pub fn oracle_spectrum(
    params: &SystemParams,
    tones: &ToneSet,
    kerr: &KerrModel,
    env: &EnvironmentParams,
    grid: &[f64],
    config: &OracleConfig,
) -> Result<SpectrumTrace> {
    let values = OracleSystem::from_model(params, tones, kerr)?.normal_ordered(env.n_th, grid, config)?;
    SpectrumTrace::new(grid.to_vec(), values, Normalization::NormalOrdered)
}

/// Pointwise comparison of two spectra on the same grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// `max |a - b| / max(|a|, 1e-12)`.
    pub max_deviation: f64,
    /// Frequency and index of the largest deviation.
    pub location: f64,
    pub index: usize,
    pub passed: bool,
}

pub fn compare_spectra(a: &SpectrumTrace, b: &SpectrumTrace, rel_tol: f64) -> Result<Comparison> {
    if a.freq_grid != b.freq_grid {
        return Err(Error::GridMismatch(format!(
            "grids differ ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    if a.normalization != b.normalization {
        return Err(Error::GridMismatch("spectra use different normalizations".into()));
    }
    if a.is_empty() {
        return Err(Error::GridMismatch("empty spectra".into()));
    }
    let mut worst = (0.0f64, 0usize);
    for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        let d = (x - y).abs() / x.abs().max(1e-12);
        // Rounding-level ties go to the lower frequency.
        if d > worst.0 * (1.0 + 1e-9) {
            worst = (d, i);
        }
    }
    Ok(Comparison {
        max_deviation: worst.0,
        location: a.freq_grid[worst.1],
        index: worst.1,
        passed: worst.0 <= rel_tol,
    })
}
