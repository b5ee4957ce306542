//! Least-squares slopes on log–log scale, for empirical convergence rates.

use core::fmt;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

impl SlopeFit {
    /// Fitted value `exp(intercept) · level^slope`.
    pub fn predict(&self, level: f64) -> f64 {
        math::exp(self.intercept + self.slope * math::ln(level))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitError {
    /// Fewer than three points.
    Insufficient(usize),
    /// A level or error at this index is not positive and finite.
    Degenerate(usize),
    LengthMismatch,
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::Insufficient(n) => write!(f, "slope fit needs at least 3 points, found {n}"),
            FitError::Degenerate(i) => write!(f, "point {i} is not positive (below resolution)"),
            FitError::LengthMismatch => write!(f, "levels and errors differ in length"),
        }
    }
}

impl core::error::Error for FitError {}

/// OLS fit of `log(error)` on `log(level)`.
pub fn fit_loglog_slope(levels: &[f64], errors: &[f64]) -> Result<SlopeFit, FitError> {
    if levels.len() != errors.len() {
        return Err(FitError::LengthMismatch);
    }
    let n = levels.len();
    for (i, (&l, &e)) in levels.iter().zip(errors).enumerate() {
        if !(l > 0.0 && e > 0.0 && l.is_finite() && e.is_finite()) {
            return Err(FitError::Degenerate(i));
        }
    }
    if n < 3 {
        return Err(FitError::Insufficient(n));
    }
    let xs: alloc::vec::Vec<f64> = levels.iter().map(|&l| math::ln(l)).collect();
    let ys: alloc::vec::Vec<f64> = errors.iter().map(|&e| math::ln(e)).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(FitError::Degenerate(0));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = math::sqrt(rss / (nf - 2.0) / sxx);
    Ok(SlopeFit { slope, stderr, intercept })
}
