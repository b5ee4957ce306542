//! Convergence studies, value functions and consistency checks.

mod checks;
mod convergence;
mod value;

pub use checks::*;
pub use convergence::*;
pub use value::*;

use driftlab_core::filter::FilterError;
use driftlab_core::simulate::SimError;
use driftlab_core::value::ValueError;
use driftlab_core::{fit_loglog_slope, DateScheme, MatrixError, SlopeFit, SymMatrix};
use thiserror::Error;

use crate::config::SchemeKind;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("filter: {0}")]
    Filter(#[from] FilterError),
    #[error("value: {0}")]
    Value(#[from] ValueError),
    #[error("matrix: {0}")]
    Matrix(#[from] MatrixError),
    #[error("{0}")]
    Invalid(String),
}

/// `n` for the deterministic scheme, `λ` for the Poisson scheme.
pub fn level_of(scheme: &DateScheme) -> f64 {
    match *scheme {
        DateScheme::Deterministic { n } => n as f64,
        DateScheme::Poisson { lambda } => lambda,
    }
}

pub fn kind_of(scheme: &DateScheme) -> SchemeKind {
    match scheme {
        DateScheme::Deterministic { .. } => SchemeKind::Deterministic,
        DateScheme::Poisson { .. } => SchemeKind::Poisson,
    }
}

fn same_kind(schemes: &[DateScheme]) -> Result<SchemeKind, ExperimentError> {
    let Some(first) = schemes.first() else {
        return Err(ExperimentError::Invalid("empty level list".into()));
    };
    let kind = kind_of(first);
    if schemes.iter().any(|s| kind_of(s) != kind) {
        return Err(ExperimentError::Invalid("levels mix date schemes".into()));
    }
    if schemes.windows(2).any(|w| level_of(&w[1]) <= level_of(&w[0])) {
        return Err(ExperimentError::Invalid("levels must be strictly increasing".into()));
    }
    for s in schemes {
        s.check().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    }
    Ok(kind)
}

/// Spectral norm of `a - b` for flat symmetric `d×d` buffers.
pub(crate) fn sym_diff_norm(a: &[f64], b: &[f64], d: usize) -> f64 {
    if d == 1 {
        return (a[0] - b[0]).abs();
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    SymMatrix::from_row_major(d, diff).expect("square").norm()
}

pub(crate) fn vec_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Log–log fit that skips nonpositive errors; returns the fit (when at least
/// three points remain) and the skipped indices.
pub fn fit_positive(levels: &[f64], errors: &[f64]) -> (Option<SlopeFit>, Vec<usize>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut skipped = Vec::new();
    for (i, (&l, &e)) in levels.iter().zip(errors).enumerate() {
        if e > 0.0 && e.is_finite() {
            xs.push(l);
            ys.push(e);
        } else {
            skipped.push(i);
        }
    }
    (fit_loglog_slope(&xs, &ys).ok(), skipped)
}

/// An additional error curve reported next to the main one.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub name: &'static str,
    pub values: Vec<f64>,
    pub slope: Option<SlopeFit>,
}

impl Diagnostic {
    fn new(name: &'static str, levels: &[f64], values: Vec<f64>) -> Self {
        let (slope, _) = fit_positive(levels, &values);
        Diagnostic { name, values, slope }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `sup_t ‖Q^Z - Q^J‖` on the grid.
    CovSup,
    /// `E[sup_t ‖Q^Z - Q^J‖^p]`.
    CovMoment,
    /// `max over checkpoints of E‖m̂^Z - m̂^J‖^p`.
    MeanMoment,
    /// `E|log X^Z_T - log X^J_T|`.
    UtilityGap,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::CovSup => "cov_sup",
            Quantity::CovMoment => "cov_moment",
            Quantity::MeanMoment => "mean_moment",
            Quantity::UtilityGap => "utility_gap",
        }
    }
}

/// Error curve against the level (`n` or `λ`), with its log–log slope.
/// Slopes are fitted against the level, so a rate `O(Δ_n)` shows up as −1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub quantity: Quantity,
    pub scheme_kind: SchemeKind,
    pub levels: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub p: f64,
    pub slope: Option<SlopeFit>,
    pub expected_slope: Option<f64>,
    /// Levels left out of the fit because their error was not positive.
    pub excluded: Vec<usize>,
    pub diagnostics: Vec<Diagnostic>,
    pub n_mc: Option<usize>,
    pub seed: Option<u64>,
    pub h_max: Vec<f64>,
}

impl ConvergenceReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        quantity: Quantity,
        scheme_kind: SchemeKind,
        levels: Vec<f64>,
        errors: Vec<f64>,
        std_errors: Vec<Option<f64>>,
        p: f64,
        expected_slope: Option<f64>,
        diagnostics: Vec<Diagnostic>,
        n_mc: Option<usize>,
        seed: Option<u64>,
        h_max: Vec<f64>,
    ) -> Self {
        let (slope, excluded) = fit_positive(&levels, &errors);
        ConvergenceReport {
            quantity,
            scheme_kind,
            levels,
            errors,
            std_errors,
            p,
            slope,
            expected_slope,
            excluded,
            diagnostics,
            n_mc,
            seed,
            h_max,
        }
    }

    /// Whether the fitted slope lies in `[lo, hi]`; `None` without a fit.
    pub fn slope_within(&self, lo: f64, hi: f64) -> Option<bool> {
        self.slope.map(|s| (lo..=hi).contains(&s.slope))
    }

    pub fn diagnostic(&self, name: &str) -> Option<&Diagnostic> {
        self.diagnostics.iter().find(|d| d.name == name)
    }
}
