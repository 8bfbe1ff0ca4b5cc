//! Sampled spectra and the quadrature helpers shared by the spectral modules.

use crate::error::{Error, Result};

/// Units of a [`SpectrumTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Normal-ordered output spectrum `S^N`, zero for vacuum.
    NormalOrdered,
    /// Heterodyne spectrum in units of the shot-noise floor, `1 + eta S^N`.
    ShotNoiseNormalized,
}

/// A one-sided spectrum sampled on an angular-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTrace {
    pub freq_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: Normalization,
    /// Non-fatal diagnostics, e.g. overlapping sidebands.
    pub warnings: Vec<String>,
}

impl SpectrumTrace {
    pub fn new(freq_grid: Vec<f64>, values: Vec<f64>, normalization: Normalization) -> Result<Self> {
        let trace = Self::measured(freq_grid, values, normalization)?;
        if normalization == Normalization::ShotNoiseNormalized {
            if let Some(i) = trace.values.iter().position(|&v| v < 1.0 - 1e-9) {
                return Err(Error::Domain(format!(
                    "shot-noise-normalized value {} below the floor at grid index {i}",
                    trace.values[i]
                )));
            }
        }
        Ok(trace)
    }

    /// Like [`Self::new`] but without the shot-noise floor check, for
    /// recorded data whose noise dips below the floor.
    pub fn measured(freq_grid: Vec<f64>, values: Vec<f64>, normalization: Normalization) -> Result<Self> {
        check_grid(&freq_grid)?;
        if values.len() != freq_grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} grid points",
                values.len(),
                freq_grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite spectrum value at grid index {i}"
            )));
        }
        Ok(Self {
            freq_grid,
            values,
            normalization,
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest sample and its frequency.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.freq_grid
            .iter()
            .zip(&self.values)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&f, &v)| (f, v))
    }

    /// Trapezoidal area between `lo` and `hi`, after subtracting `floor`.
    pub fn area_between(&self, lo: f64, hi: f64, floor: f64) -> f64 {
        let mut area = 0.0;
        for i in 1..self.len() {
            let (x0, x1) = (self.freq_grid[i - 1], self.freq_grid[i]);
            if x0 >= lo && x1 <= hi {
                area += 0.5 * (x1 - x0) * (self.values[i - 1] + self.values[i] - 2.0 * floor);
            }
        }
        area
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("empty frequency grid".into()));
    }
    if let Some(i) = grid.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite grid point at index {i}")));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Domain(format!(
            "grid is not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// Nodes and weights for integrals over the whole real line.
///
/// Substitutes `x = center + scale tan(theta)` and applies the open midpoint
/// rule with `n` nodes in `theta`. Suited to integrands with peaks of width
/// about `scale` near `center` that decay at least like `1/x^2`.
pub fn real_line_rule(center: f64, scale: f64, n: usize) -> Vec<(f64, f64)> {
    let h = std::f64::consts::PI / n as f64;
    (0..n)
        .map(|i| {
            let theta = -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * h;
            let c = theta.cos();
            (center + scale * theta.tan(), h * scale / (c * c))
        })
        .collect()
}

/// Integral of `f` over the real line with [`real_line_rule`].
pub fn integrate_real_line<F>(f: F, center: f64, scale: f64, n: usize) -> f64
where
    F: Fn(f64) -> f64 + Sync,
{
    let rule = real_line_rule(center, scale, n);
    map_indices(n, |i| rule[i].1 * f(rule[i].0)).iter().sum()
}

/// Evaluates `f(0..n)` in parallel when the `parallel` feature is enabled.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Evaluates `f` at every grid point, in parallel when enabled.
pub(crate) fn evaluate_grid<F>(grid: &[f64], f: F) -> Vec<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    map_indices(grid.len(), |i| f(grid[i]))
}

/// Fallible variant of [`map_indices`]; returns the first error by index.
pub(crate) fn try_map_indices<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    map_indices(n, f).into_iter().collect()
}
