//! Least-squares line fits.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 when all `y` are equal.
    pub r_squared: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

/// Ordinary least squares `y ~ slope * x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::UnderdeterminedFit(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit data".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::UnderdeterminedFit(1));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LineFit { slope, intercept, r_squared, rms_residual: (sse / nf).sqrt() })
}

/// Fit of `log y` against `log x`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}
