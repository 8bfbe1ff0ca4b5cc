//! Cavity frequency response to intensity modulation, modelled as a sum of
//! first-order low-pass filters.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fitting::{least_squares, FitProblem};

/// `sum_i a_i / (1 + i omega / omega_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPassStack {
    /// Shift per photon of each stage (rad/s per photon).
    pub amplitudes: Vec<f64>,
    /// Corner frequencies, strictly increasing (rad/s).
    pub corners: Vec<f64>,
}

impl LowPassStack {
    pub fn new(amplitudes: Vec<f64>, corners: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() || amplitudes.len() != corners.len() {
            return Err(Error::InvalidParams(
                "need one amplitude per corner and at least one stage".into(),
            ));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParams("amplitudes must be finite".into()));
        }
        if corners.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidParams("corners must be positive".into()));
        }
        if corners.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("corners must be strictly increasing".into()));
        }
        Ok(Self {
            amplitudes,
            corners,
        })
    }

    pub fn stages(&self) -> usize {
        self.corners.len()
    }

    /// Impulse response `h(t) = sum_i a_i omega_i exp(-omega_i t)` for `t >= 0`.
    /// Its transform `\int h(t) e^{-i omega t} dt` is [`response`].
    pub fn impulse_response(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.amplitudes
            .iter()
            .zip(&self.corners)
            .map(|(a, w)| a * w * (-w * t).exp())
            .sum()
    }
}

/// Complex frequency shift per photon at modulation frequency `omega`.
pub fn response(stack: &LowPassStack, omega: f64) -> Complex64 {
    stack
        .amplitudes
        .iter()
        .zip(&stack.corners)
        .map(|(&a, &w)| a / Complex64::new(1.0, omega / w))
        .sum()
}

/// Measured response samples.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseData {
    /// `(omega, |response|)`.
    Magnitude(Vec<(f64, f64)>),
    /// `(omega, response)`.
    Complex(Vec<(f64, Complex64)>),
}

impl ResponseData {
    fn frequencies(&self) -> Vec<f64> {
        match self {
            ResponseData::Magnitude(d) => d.iter().map(|p| p.0).collect(),
            ResponseData::Complex(d) => d.iter().map(|p| p.0).collect(),
        }
    }

    fn dc_magnitude(&self) -> f64 {
        match self {
            ResponseData::Magnitude(d) => d.iter().map(|p| p.1.abs()).fold(0.0, f64::max),
            ResponseData::Complex(d) => d.iter().map(|p| p.1.norm()).fold(0.0, f64::max),
        }
    }
}

/// Fitted stack with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseFit {
    pub stack: LowPassStack,
    /// Covariance of `(a_1.., omega_1..)` in that order.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

const STAGES: usize = 3;

/// Fits a three-stage stack with positive amplitudes.
///
/// Works in log amplitudes and log corners, tries several initial corner
/// spreads across the data span and keeps the best. Residuals are relative
/// to the data magnitude, so all decades weigh alike.
pub fn fit_response(data: &ResponseData) -> Result<ResponseFit> {
    let freqs = data.frequencies();
    if freqs.len() < 12 {
        return Err(Error::Fit(format!("{} samples; at least 12 required", freqs.len())));
    }
    let (lo, hi) = freqs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &f| (l.min(f), h.max(f)));
    if !(lo > 0.0) || hi / lo < 1e3 {
        return Err(Error::Fit("samples must span at least three decades of positive frequency".into()));
    }
    let dc = data.dc_magnitude();
    if !(dc > 0.0) {
        return Err(Error::Fit("response data are identically zero".into()));
    }
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        let stack = LowPassStack {
            amplitudes: p[..STAGES].iter().map(|v| v.exp()).collect(),
            corners: p[STAGES..].iter().map(|v| v.exp()).collect(),
        };
        Ok(match data {
            ResponseData::Magnitude(d) => d
                .iter()
                .map(|&(w, m)| (response(&stack, w).norm() - m) / m.abs().max(1e-12 * dc))
                .collect(),
            ResponseData::Complex(d) => d
                .iter()
                .flat_map(|&(w, z)| {
                    let e = (response(&stack, w) - z) / z.norm().max(1e-12 * dc);
                    [e.re, e.im]
                })
                .collect(),
        })
    };
    let (l_lo, l_hi) = (lo.ln(), hi.ln());
    let mut bounds = vec![((1e-6 * dc).ln(), (10.0 * dc).ln()); STAGES];
    bounds.extend(vec![(l_lo - 5.0, l_hi + 5.0); STAGES]);
    let starts: [[f64; STAGES]; 4] = [
        [0.15, 0.5, 0.85],
        [0.1, 0.35, 0.7],
        [0.3, 0.65, 0.9],
        [0.05, 0.25, 0.5],
    ];
    let mut best: Option<crate::fitting::FitResult> = None;
    for s in &starts {
        let mut p0 = vec![(dc / STAGES as f64).ln(); STAGES];
        p0.extend(s.iter().map(|q| l_lo + q * (l_hi - l_lo)));
        let problem = FitProblem::new(residual, p0)
            .with_bounds(bounds.clone())
            .with_scale(vec![1.0; 2 * STAGES]);
        let Ok(fit) = least_squares(&problem, 1e-12, 400) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| fit.residual_norm < b.residual_norm) {
            best = Some(fit);
        }
    }
    let fit = best.ok_or_else(|| Error::Fit("every start failed".into()))?;

    let mut order: Vec<usize> = (0..STAGES).collect();
    order.sort_by(|&i, &j| fit.parameters[STAGES + i].total_cmp(&fit.parameters[STAGES + j]));
    let perm: Vec<usize> = order
        .iter()
        .copied()
        .chain(order.iter().map(|i| i + STAGES))
        .collect();
    let values: Vec<f64> = perm.iter().map(|&k| fit.parameters[k].exp()).collect();
    let covariance = DMatrix::from_fn(2 * STAGES, 2 * STAGES, |i, j| {
        values[i] * values[j] * fit.covariance[(perm[i], perm[j])]
    });
    let amplitudes = values[..STAGES].to_vec();
    let corners = values[STAGES..].to_vec();

    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(format!("fit did not converge in {} iterations", fit.iterations));
    }
    for k in 1..STAGES {
        if corners[k] / corners[k - 1] < 2.0 {
            warnings.push(format!(
                "degenerate corners: stages {} and {} differ by a factor {:.3}",
                k,
                k + 1,
                corners[k] / corners[k - 1]
            ));
        }
    }
    let total: f64 = amplitudes.iter().sum();
    for (k, a) in amplitudes.iter().enumerate() {
        if *a < 1e-3 * total {
            warnings.push(format!("stage {} carries a negligible amplitude", k + 1));
        }
    }
    // Nearly coincident corners are nudged apart so the stack stays valid.
    let mut corners = corners;
    for k in 1..STAGES {
        if corners[k] <= corners[k - 1] {
            corners[k] = corners[k - 1] * (1.0 + 1e-12);
        }
    }
    Ok(ResponseFit {
        stack: LowPassStack::new(amplitudes, corners)?,
        covariance,
        residual_norm: fit.residual_norm,
        converged: fit.converged,
        warnings,
    })
}

/// Corner frequencies (Hz) reported for three buffer-gas pressures:
/// `(label, [f_1, f_2, f_3])`.
pub const MEASURED_CORNERS_HZ: [(&str, [f64; 3]); 3] = [
    ("2 mbar", [16.5e3, 0.07e6, 1.84e6]),
    ("20 mbar", [17.6e3, 0.30e6, 8.62e6]),
    ("150 mbar", [24.6e3, 1.10e6, 15.4e6]),
];
