//! Log-utility value functions, optimal strategies and wealth paths.
//!
//! For an investor with conditional covariance `Q^H`,
//! `V^H(x₀) = log x₀ + rT + ½∫₀ᵀ tr(M_R(Σ_t + m_t m_tᵀ - E[Q^H_t])) dt`
//! where `m_t`, `Σ_t` are the prior moments of the drift and
//! `M_R = (σ_R σ_Rᵀ)⁻¹`. The drift is read as the excess return over `r`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::filter::{CovTrack, FilterError, FilterTrajectory, Regime};
use crate::math;
use crate::model::{DateScheme, Model};
use crate::simulate::{build_grid, MarketPath, SimError, TimeGrid};
use crate::SymMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum ValueError {
    BadWealth(f64),
    BadStep(f64),
    /// Poisson dates make `E[Q^Z]` random; use a Monte Carlo estimate.
    RandomDates,
    Sim(SimError),
    Filter(FilterError),
}

impl fmt::Display for ValueError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueError::BadWealth(x) => write!(f, "initial wealth must be positive, found {x}"),
            ValueError::BadStep(h) => write!(f, "quadrature step must be positive, found {h}"),
            ValueError::RandomDates => {
                write!(f, "Poisson dates need a Monte Carlo estimate of the expected covariance")
            }
            ValueError::Sim(e) => write!(f, "{e}"),
            ValueError::Filter(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ValueError {}

impl From<SimError> for ValueError {
    fn from(e: SimError) -> Self {
        ValueError::Sim(e)
    }
}

impl From<FilterError> for ValueError {
    fn from(e: FilterError) -> Self {
        ValueError::Filter(e)
    }
}

/// Composite Simpson rule on equally spaced `values` with spacing `h`.
/// An odd number of intervals closes with the 3/8 rule on the last three;
/// a single interval falls back to the trapezoid rule.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let even = if n % 2 == 0 { n } else { n - 3 };
            let mut s = 0.0;
            if even > 0 {
                s += values[0] + values[even];
                for (i, v) in values[1..even].iter().enumerate() {
                    s += if i % 2 == 0 { 4.0 * v } else { 2.0 * v };
                }
                s *= h / 3.0;
            }
            if even < n {
                let f = &values[even..];
                s += 3.0 * h / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3]);
            }
            s
        }
    }
}

/// Integral of nodal `values` over `grid`, Simpson on each uniform stretch
/// between breakpoints.
pub fn integrate_on_grid(grid: &TimeGrid, values: &[f64]) -> f64 {
    assert_eq!(values.len(), grid.len(), "one value per grid node");
    let nodes = grid.nodes();
    grid.breaks()
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let h = (nodes[b] - nodes[a]) / (b - a) as f64;
            simpson_uniform(&values[a..=b], h)
        })
        .sum()
}

/// Grid for value quadrature: nodes at every date, spacing at most
/// `quad_step`, and at least two steps between consecutive dates.
pub fn quadrature_grid(model: &Model, dates: &[f64], quad_step: f64) -> Result<TimeGrid, ValueError> {
    check_step(quad_step)?;
    Ok(build_grid(model.horizon(), dates, quad_step, &[], 2)?)
}

fn check_step(quad_step: f64) -> Result<(), ValueError> {
    if quad_step > 0.0 && quad_step.is_finite() {
        Ok(())
    } else {
        Err(ValueError::BadStep(quad_step))
    }
}

#[inline]
fn trace_product(a: &[f64], b: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for k in 0..d {
            s += a[i * d + k] * b[k * d + i];
        }
    }
    s
}

/// `∫₀ᵀ tr(M_R(Σ_t + m_t m_tᵀ)) dt`, the full-information part of every value.
pub fn base_integral(model: &Model, quad_step: f64) -> Result<f64, ValueError> {
    let grid = quadrature_grid(model, &[], quad_step)?;
    let d = model.dim();
    let prec = model.return_precision().as_slice();
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&t| {
            let mean = model.drift_mean(t);
            let mut second = model.drift_cov(t).into_matrix().into_vec();
            for i in 0..d {
                for j in 0..d {
                    second[i * d + j] += mean[i] * mean[j];
                }
            }
            trace_product(prec, &second, d)
        })
        .collect();
    Ok(integrate_on_grid(&grid, &values))
}

/// `∫₀ᵀ tr(M_R Q_t) dt` along a covariance track on `grid`. At information
/// dates the post-update value is used; the jump does not affect the integral.
pub fn covariance_integral(model: &Model, cov: &CovTrack, grid: &TimeGrid) -> f64 {
    let d = model.dim();
    let prec = model.return_precision().as_slice();
    let values: Vec<f64> = (0..grid.len()).map(|i| trace_product(prec, cov.q_at(i), d)).collect();
    // Each uniform stretch ends at a date; its right end must use the left limit.
    let nodes = grid.nodes();
    let mut total = 0.0;
    let mut jumps = cov.jumps().iter().peekable();
    let mut stretch = Vec::new();
    for w in grid.breaks().windows(2) {
        let (a, b) = (w[0], w[1]);
        stretch.clear();
        stretch.extend_from_slice(&values[a..=b]);
        while let Some(j) = jumps.peek() {
            if j.node < b {
                jumps.next();
            } else {
                if j.node == b {
                    stretch[b - a] = trace_product(prec, j.pre.as_slice(), d);
                }
                break;
            }
        }
        let h = (nodes[b] - nodes[a]) / (b - a) as f64;
        total += simpson_uniform(&stretch, h);
    }
    total
}

/// `log x₀ + rT + ½(base - cov_int)`.
pub fn value_from_integrals(model: &Model, x0: f64, base: f64, cov_int: f64) -> f64 {
    math::ln(x0) + model.params().rate * model.horizon() + 0.5 * (base - cov_int)
}

/// Value of an investor whose covariance is deterministic: R, J, F, or Z
/// with deterministic dates.
pub fn deterministic_value(
    model: &Model,
    regime: Regime,
    scheme: Option<&DateScheme>,
    x0: f64,
    quad_step: f64,
) -> Result<f64, ValueError> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(ValueError::BadWealth(x0));
    }
    let base = base_integral(model, quad_step)?;
    let cov_int = match (regime, scheme) {
        (Regime::F, _) => 0.0,
        (Regime::Z, Some(DateScheme::Poisson { .. })) => return Err(ValueError::RandomDates),
        (Regime::Z, Some(s)) => {
            let dates = s.deterministic_dates(model.horizon());
            covariance_integral_for_dates(model, &dates, &s.expert_covariance(model), quad_step)?
        }
        (Regime::Z, None) => covariance_integral_for_dates(model, &[], &SymMatrix::zeros(model.dim()), quad_step)?,
        (r, _) => {
            let grid = quadrature_grid(model, &[], quad_step)?;
            let cov = CovTrack::compute(model, r, &grid, None)?;
            covariance_integral(model, &cov, &grid)
        }
    };
    Ok(value_from_integrals(model, x0, base, cov_int))
}

/// `∫₀ᵀ tr(M_R Q^Z_t) dt` for one realization of the information dates.
pub fn covariance_integral_for_dates(
    model: &Model,
    dates: &[f64],
    gamma: &SymMatrix,
    quad_step: f64,
) -> Result<f64, ValueError> {
    let grid = quadrature_grid(model, dates, quad_step)?;
    let cov = CovTrack::compute(model, Regime::Z, &grid, Some(gamma))?;
    Ok(covariance_integral(model, &cov, &grid))
}

/// `π = M_R m̂` for every node of a flat mean track.
pub fn optimal_strategy(model: &Model, m_hat: &[f64]) -> Vec<f64> {
    let d = model.dim();
    let prec = model.return_precision();
    m_hat.chunks_exact(d).flat_map(|m| prec.mul_vec(m)).collect()
}

/// Optimal strategy at every state of a trajectory.
pub fn strategy_along(model: &Model, trajectory: &FilterTrajectory) -> Vec<Vec<f64>> {
    let prec = model.return_precision();
    trajectory.states.iter().map(|s| prec.mul_vec(&s.m_hat)).collect()
}

/// Terminal log-wealth from `x0` under `π_t = M_R m̂_t`, held constant over
/// each grid interval:
/// `log X += r h + πᵀμ h - ½‖σ_Rᵀπ‖² h + πᵀσ_R ΔW^R`.
pub fn terminal_log_wealth(model: &Model, path: &MarketPath, m_hat: &[f64], x0: f64) -> f64 {
    let d = model.dim();
    let l = model.return_noise_dim();
    let prec = model.return_precision().as_slice();
    let sr = model.sigma_r().as_slice();
    let rate = model.params().rate;
    let mut pi = vec![0.0; d];
    let mut exposure = vec![0.0; l];
    let mut log_x = math::ln(x0);
    for i in 0..path.grid.intervals() {
        let h = path.grid.step(i);
        let m = &m_hat[i * d..(i + 1) * d];
        crate::matrix::kernel::mat_vec(prec, m, &mut pi, d, d);
        // σ_Rᵀπ
        for (k, e) in exposure.iter_mut().enumerate() {
            *e = (0..d).map(|j| sr[j * l + k] * pi[j]).sum();
        }
        let drift: f64 = pi.iter().zip(path.mu_at(i)).map(|(p, mu)| p * mu).sum();
        let var: f64 = exposure.iter().map(|e| e * e).sum();
        let noise: f64 = exposure.iter().zip(path.wr_at(i)).map(|(e, w)| e * w).sum();
        log_x += rate * h + drift * h - 0.5 * var * h + noise;
    }
    log_x
}
