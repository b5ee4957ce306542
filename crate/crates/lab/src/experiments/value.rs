use driftlab_core::filter::Regime;
use driftlab_core::rng::PathStreams;
use driftlab_core::simulate::scheme_dates;
use driftlab_core::value::{base_integral, covariance_integral_for_dates, deterministic_value, value_from_integrals};
use driftlab_core::{DateScheme, Model};

use super::{kind_of, level_of, ExperimentError};
use crate::config::SchemeKind;
use crate::mc::{Runner, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub regime: Regime,
    pub scheme_kind: Option<SchemeKind>,
    pub level: Option<f64>,
    pub value: f64,
    /// Normal-approximation 95% interval for Monte Carlo estimates.
    pub ci: Option<(f64, f64)>,
    pub sd: Option<f64>,
    pub n_mc: Option<usize>,
    pub x0: f64,
}

impl ValueReport {
    pub fn label(&self) -> String {
        match (self.regime, self.scheme_kind, self.level) {
            (Regime::Z, Some(SchemeKind::Deterministic), Some(n)) => format!("Z,n={n}"),
            (Regime::Z, Some(SchemeKind::Poisson), Some(l)) => format!("Z,lambda={l}"),
            (r, _, _) => r.name().to_string(),
        }
    }
}

/// `V^H(x₀)` for one investor.
///
/// Deterministic covariances (R, J, F, Z with deterministic dates) are
/// integrated directly. For Z with Poisson dates the value is averaged over
/// `n_mc` date sequences; the date sequence of draw `k` is the one path `k`
/// of the simulator would use.
#[allow(clippy::too_many_arguments)]
pub fn value_function(
    model: &Model,
    regime: Regime,
    scheme: Option<&DateScheme>,
    x0: f64,
    quad_step: f64,
    n_mc: Option<usize>,
    seed: u64,
    runner: &Runner,
) -> Result<ValueReport, ExperimentError> {
    let scheme_kind = scheme.filter(|_| regime == Regime::Z).map(kind_of);
    let level = scheme.filter(|_| regime == Regime::Z).map(level_of);
    let base = ValueReport { regime, scheme_kind, level, value: 0.0, ci: None, sd: None, n_mc: None, x0 };
    match (regime, scheme) {
        (Regime::Z, Some(s @ DateScheme::Poisson { .. })) => {
            let n = n_mc.ok_or_else(|| ExperimentError::Invalid("Poisson dates need n_mc".into()))?;
            if n < 2 {
                return Err(ExperimentError::Invalid("Poisson value needs at least 2 draws".into()));
            }
            if x0.is_nan() || x0 <= 0.0 {
                return Err(driftlab_core::ValueError::BadWealth(x0).into());
            }
            let full = base_integral(model, quad_step)?;
            let gamma = s.expert_covariance(model);
            let values = runner.map(n, |k| -> Result<f64, ExperimentError> {
                let mut streams = PathStreams::new(seed, k as u64);
                let dates = scheme_dates(model, s, &mut streams);
                let cov_int = covariance_integral_for_dates(model, &dates, &gamma, quad_step)?;
                Ok(value_from_integrals(model, x0, full, cov_int))
            })?;
            let sm = Summary::of(&values);
            Ok(ValueReport { value: sm.mean, ci: Some(sm.ci95()), sd: Some(sm.sd), n_mc: Some(n), ..base })
        }
        _ => {
            let value = deterministic_value(model, regime, scheme.filter(|_| regime == Regime::Z), x0, quad_step)?;
            Ok(ValueReport { value, ..base })
        }
    }
}

/// `V^R`, `V^{Z,n}` for each `n`, and `V^J`.
pub fn table2a(model: &Model, ns: &[usize], x0: f64, quad_step: f64) -> Result<Vec<ValueReport>, ExperimentError> {
    let runner = Runner::default();
    let mut rows = vec![value_function(model, Regime::R, None, x0, quad_step, None, 0, &runner)?];
    for &n in ns {
        let s = DateScheme::Deterministic { n };
        rows.push(value_function(model, Regime::Z, Some(&s), x0, quad_step, None, 0, &runner)?);
    }
    rows.push(value_function(model, Regime::J, None, x0, quad_step, None, 0, &runner)?);
    Ok(rows)
}

/// Monte Carlo `V^{Z,λ}` with 95% intervals for each `λ`.
pub fn table2b(
    model: &Model,
    lambdas: &[f64],
    x0: f64,
    quad_step: f64,
    n_mc: usize,
    seed: u64,
    runner: &Runner,
) -> Result<Vec<ValueReport>, ExperimentError> {
    lambdas
        .iter()
        .map(|&lambda| {
            let s = DateScheme::Poisson { lambda };
            value_function(model, Regime::Z, Some(&s), x0, quad_step, Some(n_mc), seed, runner)
        })
        .collect()
}
