//! Bath occupancy and pump heating from a sideband-cooling curve.

use nalgebra::Matrix2;

use super::lm::{least_squares, FitProblem};
use crate::error::{Error, Result};

/// Mean occupancy measured at one cooling photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingSample {
    pub n_c: f64,
    pub n_bar: f64,
    pub sigma: Option<f64>,
}

impl CoolingSample {
    pub fn new(n_c: f64, n_bar: f64) -> Self {
        Self {
            n_c,
            n_bar,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoolingFit {
    pub n_th: f64,
    pub alpha_heating: f64,
    /// Covariance of `(n_th, alpha_heating)`.
    pub covariance: Matrix2<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl CoolingFit {
    pub fn n_th_sigma(&self) -> f64 {
        self.covariance[(0, 0)].max(0.0).sqrt()
    }

    pub fn alpha_sigma(&self) -> f64 {
        self.covariance[(1, 1)].max(0.0).sqrt()
    }
}

/// Fits `n_bar = (n_th + alpha n_c) / (1 + c0 n_c)` for `n_th` and `alpha`.
///
/// Both parameters are constrained non-negative. The model is linear in them,
/// so the fit starts from the unconstrained linear solution.
pub fn fit_cooling_curve(points: &[CoolingSample], c0: f64) -> Result<CoolingFit> {
    if points.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 cooling points, got {}",
            points.len()
        )));
    }
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(Error::Fit(format!("c0 must be positive, got {c0}")));
    }
    for p in points {
        if !(p.n_c.is_finite() && p.n_c > 0.0 && p.n_bar.is_finite()) {
            return Err(Error::Fit(format!("invalid cooling point {p:?}")));
        }
        if let Some(s) = p.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Fit(format!("invalid sigma {s}")));
            }
        }
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.n_c), hi.max(p.n_c))
    });
    if hi / lo < 10.0 {
        return Err(Error::Fit(format!(
            "cooling points span {:.2} decades of n_c, need at least one",
            (hi / lo).log10()
        )));
    }
    let weighted = points.iter().all(|p| p.sigma.is_some());
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(points
            .iter()
            .map(|p| {
                let model = (x[0] + x[1] * p.n_c) / (1.0 + c0 * p.n_c);
                (model - p.n_bar) / p.sigma.unwrap_or(1.0)
            })
            .collect())
    };

    // Starting point from the linearized problem n_bar (1 + c0 n_c) = n_th + alpha n_c.
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let y = p.n_bar * (1.0 + c0 * p.n_c);
        sx += p.n_c;
        sy += y;
        sxx += p.n_c * p.n_c;
        sxy += p.n_c * y;
    }
    let m = points.len() as f64;
    let alpha0 = ((m * sxy - sx * sy) / (m * sxx - sx * sx)).max(0.0);
    let n0 = ((sy - alpha0 * sx) / m).max(0.0);
    let n_scale = points.iter().map(|p| p.n_bar.abs()).fold(0.0, f64::max).max(1e-12);
    let problem = FitProblem::new(residual, vec![n0, alpha0])
        .with_bounds(vec![(0.0, f64::INFINITY), (0.0, f64::INFINITY)])
        .with_scale(vec![n_scale, n_scale * c0])
        .with_scaled_covariance(!weighted);
    let fit = least_squares(&problem, 1e-12, 200)?;

    let mut warnings = Vec::new();
    if fit.at_bounds[1] {
        warnings.push("heating coefficient pinned at zero".into());
    }
    if fit.at_bounds[0] {
        warnings.push("bath occupancy pinned at zero".into());
    }
    if !fit.converged {
        warnings.push("fit did not converge".into());
    }
    let c = &fit.covariance;
    Ok(CoolingFit {
        n_th: fit.parameters[0],
        alpha_heating: fit.parameters[1],
        covariance: Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]),
        residual_norm: fit.residual_norm,
        converged: fit.converged,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const C0: f64 = 1.014e-2;

    fn curve(n_th: f64, alpha: f64) -> Vec<CoolingSample> {
        [5.0, 20.0, 50.0, 100.0, 200.0, 400.0, 640.0]
            .iter()
            .map(|&n| CoolingSample::new(n, (n_th + alpha * n) / (1.0 + C0 * n)))
            .collect()
    }

    #[test]
    fn recovers_noiseless_curve() {
        let fit = fit_cooling_curve(&curve(1200.0, 0.35), C0).unwrap();
        assert!((fit.n_th / 1200.0 - 1.0).abs() < 1e-8, "{fit:?}");
        assert!((fit.alpha_heating / 0.35 - 1.0).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn zero_heating_is_reported() {
        let fit = fit_cooling_curve(&curve(800.0, 0.0), C0).unwrap();
        assert!(fit.alpha_heating.abs() < 1e-9);
        assert!((fit.n_th / 800.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_narrow_span_and_few_points() {
        let pts: Vec<_> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&n| CoolingSample::new(n, 100.0))
            .collect();
        assert!(fit_cooling_curve(&pts, C0).is_err());
        assert!(fit_cooling_curve(&curve(1.0, 0.1)[..3], C0).is_err());
    }
}
