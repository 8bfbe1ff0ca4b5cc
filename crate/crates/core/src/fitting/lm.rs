//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with box bounds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Residual callback: parameters to residual vector.
pub type ResidualFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a>;

/// A nonlinear least-squares problem.
pub struct FitProblem<'a> {
    pub residual: ResidualFn<'a>,
    pub initial: Vec<f64>,
    /// Per-parameter `[lo, hi]`; use infinities for free parameters.
    pub bounds: Vec<(f64, f64)>,
    /// Characteristic magnitude of each parameter.
    pub scale: Vec<f64>,
    /// Multiply the covariance by the reduced chi-square. Turn off when the
    /// residuals are already divided by known standard deviations.
    pub scale_covariance: bool,
}

impl<'a> FitProblem<'a> {
    pub fn new<F>(residual: F, initial: Vec<f64>) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a,
    {
        let n = initial.len();
        let scale = initial.iter().map(|v| v.abs().max(1.0)).collect();
        Self {
            residual: Box::new(residual),
            initial,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            scale,
            scale_covariance: true,
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_scale(mut self, scale: Vec<f64>) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_scaled_covariance(mut self, on: bool) -> Self {
        self.scale_covariance = on;
        self
    }
}

/// Outcome of [`least_squares`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub parameters: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Parameters that finished on (or within rounding of) a bound.
    pub at_bounds: Vec<bool>,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.parameters.len())
            .map(|i| self.covariance[(i, i)].max(0.0).sqrt())
            .collect()
    }
}

fn clamp(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn evaluate(problem: &FitProblem<'_>, x: &[f64]) -> Result<DVector<f64>> {
    let r = (problem.residual)(x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite residual".into()));
    }
    Ok(DVector::from_vec(r))
}

/// Central differences with step `scale * 1e-6`, one-sided at a bound.
fn jacobian(problem: &FitProblem<'_>, x: &[f64], r0: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(r0.len(), n);
    for j in 0..n {
        let h = problem.scale[j] * 1e-6;
        let (lo, hi) = problem.bounds[j];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] = (x[j] + h).min(hi);
        xm[j] = (x[j] - h).max(lo);
        let (rp, rm) = match (xp[j] > x[j], xm[j] < x[j]) {
            (true, true) => (evaluate(problem, &xp)?, evaluate(problem, &xm)?),
            (true, false) => (evaluate(problem, &xp)?, r0.clone()),
            (false, true) => (r0.clone(), evaluate(problem, &xm)?),
            (false, false) => continue,
        };
        let d = xp[j] - xm[j];
        jac.set_column(j, &((rp - rm) / d));
    }
    Ok(jac)
}

fn covariance(jac: &DMatrix<f64>, cost: f64, scale: bool) -> DMatrix<f64> {
    let (m, n) = jac.shape();
    let jtj = jac.transpose() * jac;
    let inv = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::INFINITY));
    let inv = (&inv + inv.transpose()) * 0.5;
    if scale && m > n {
        inv * (cost / (m - n) as f64)
    } else {
        inv
    }
}

/// Minimizes the sum of squared residuals.
///
/// Starts as pure Gauss-Newton and adds Marquardt damping only after a
/// rejected step. Steps are projected onto the bounds. Stops when both the
/// relative parameter step and the relative cost decrease fall below `tol`.
/// Running out of iterations returns `converged = false` rather than an error.
pub fn least_squares(problem: &FitProblem<'_>, tol: f64, max_iter: usize) -> Result<FitResult> {
    let n = problem.initial.len();
    if problem.bounds.len() != n || problem.scale.len() != n {
        return Err(Error::Fit("bounds and scale must match the parameter count".into()));
    }
    if problem.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Fit("scale hints must be positive".into()));
    }
    for (i, (&v, &(lo, hi))) in problem.initial.iter().zip(&problem.bounds).enumerate() {
        if !(lo <= v && v <= hi) {
            return Err(Error::Fit(format!("initial parameter {i} = {v} outside [{lo}, {hi}]")));
        }
    }
    let mut x = problem.initial.clone();
    let mut r = evaluate(problem, &x)
        .map_err(|e| Error::Fit(format!("residual fails at the initial point: {e}")))?;
    if r.len() < n {
        return Err(Error::Fit(format!(
            "{} residuals for {} parameters",
            r.len(),
            n
        )));
    }
    let mut cost = r.norm_squared();
    let mut lambda = 0.0f64;
    let mut iterations = 0;
    let mut converged = cost == 0.0;

    while !converged && iterations < max_iter {
        iterations += 1;
        let jac = jacobian(problem, &x, &r)?;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
        if max_diag == 0.0 || g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda <= 1e16 * max_diag {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12 * max_diag);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            if let Some(step) = step {
                let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                clamp(&mut trial, &problem.bounds);
                if let Ok(rt) = evaluate(problem, &trial) {
                    let ct = rt.norm_squared();
                    if ct < cost {
                        let rel_step = trial
                            .iter()
                            .zip(&x)
                            .zip(&problem.scale)
                            .map(|((t, v), s)| (t - v).abs() / (v.abs() + s))
                            .fold(0.0, f64::max);
                        let rel_drop = (cost - ct) / cost;
                        x = trial;
                        r = rt;
                        cost = ct;
                        lambda /= 10.0;
                        if lambda < 1e-12 * max_diag {
                            lambda = 0.0;
                        }
                        converged = (rel_step < tol && rel_drop < tol) || cost == 0.0;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
        }
        if !accepted {
            // No damped step lowers the cost: a numerical minimum.
            converged = true;
        }
    }

    let jac = jacobian(problem, &x, &r)?;
    let covariance = covariance(&jac, cost, problem.scale_covariance);
    let at_bounds = x
        .iter()
        .zip(&problem.bounds)
        .zip(&problem.scale)
        .map(|((v, &(lo, hi)), s)| (v - lo).abs() <= 1e-9 * s || (hi - v).abs() <= 1e-9 * s)
        .collect();
    Ok(FitResult {
        parameters: x,
        covariance,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        at_bounds,
    })
}
