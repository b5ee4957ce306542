//! Oracle checks on the filter and simulator: moment consistency, Loewner
//! ordering, the update identity, the estimation-lemma bound and the
//! stationary Riccati roots.

use driftlab_core::filter::{mean_track, stationary_q, update_covariance, update_mean, CovTrack, Regime};
use driftlab_core::rng::PathStreams;
use driftlab_core::simulate::{make_grid, scheme_dates, simulate_path, TimeGrid};
use driftlab_core::{loewner_leq, solve_spd, spectral_norm, DateScheme, Matrix, Model, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ExperimentError;
use crate::mc::{Merge, Runner};

/// One Monte Carlo moment compared with its exact target.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub regime: Option<Regime>,
    /// `"error_cov"`, `"mean"` or `"noise_cov"`, `"noise_mean"`.
    pub quantity: &'static str,
    pub i: usize,
    pub j: usize,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
}

impl MomentCheck {
    /// Distance to the target in standard errors.
    pub fn z_score(&self) -> f64 {
        let diff = self.estimate - self.target;
        if self.se > 0.0 {
            diff.abs() / self.se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, k: f64) -> bool {
        self.z_score() <= k
    }
}

/// Running sums of a fixed set of per-path samples and their squares.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    count: f64,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Merge for Moments {
    fn merge(self, other: Self) -> Self {
        Moments { count: self.count + other.count, sum: self.sum.merge(other.sum), sq: self.sq.merge(other.sq) }
    }
}

impl Moments {
    fn from_samples(samples: Vec<f64>) -> Self {
        let sq = samples.iter().map(|x| x * x).collect();
        Moments { count: 1.0, sum: samples, sq }
    }

    fn mean_se(&self, idx: usize) -> (f64, f64) {
        let n = self.count;
        let mean = self.sum[idx] / n;
        let var = ((self.sq[idx] - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Error covariance `E[(μ_T - m̂_T)(μ_T - m̂_T)ᵀ]` against `Q_T`, and
/// `E[m̂_T]` against the prior drift mean, for R, J and Z on a
/// deterministic date scheme.
pub fn filter_consistency(
    model: &Model,
    scheme: &DateScheme,
    n_mc: usize,
    seed: u64,
    h_max: Option<f64>,
    runner: &Runner,
) -> Result<Vec<MomentCheck>, ExperimentError> {
    if !matches!(scheme, DateScheme::Deterministic { .. }) {
        return Err(ExperimentError::Invalid("consistency oracle needs deterministic dates".into()));
    }
    if n_mc < 2 {
        return Err(ExperimentError::Invalid("consistency oracle needs at least 2 paths".into()));
    }
    let d = model.dim();
    let horizon = model.horizon();
    let h = h_max.unwrap_or_else(|| scheme.default_h_max(horizon));
    let grid = make_grid(model, scheme, &scheme.deterministic_dates(horizon), h)?;
    let regimes = [Regime::R, Regime::J, Regime::Z];
    let tracks = regimes
        .iter()
        .map(|&r| CovTrack::for_scheme(model, r, scheme, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let last = grid.len() - 1;
    let per_regime = d * d + d;
    let moments = runner
        .sum(n_mc, |path| -> Result<Moments, ExperimentError> {
            let mut streams = PathStreams::new(seed, path as u64);
            let market = simulate_path(model, scheme, &grid, &mut streams)?;
            let mu = market.mu_at(last);
            let mut samples = Vec::with_capacity(regimes.len() * per_regime);
            let mut m = Vec::new();
            for track in &tracks {
                mean_track(model, track, &market, &mut m)?;
                let m_t = &m[last * d..];
                let err: Vec<f64> = mu.iter().zip(m_t).map(|(a, b)| a - b).collect();
                for a in 0..d {
                    for b in 0..d {
                        samples.push(err[a] * err[b]);
                    }
                }
                samples.extend_from_slice(m_t);
            }
            Ok(Moments::from_samples(samples))
        })?
        .ok_or_else(|| ExperimentError::Invalid("no paths".into()))?;
    let prior_mean = model.drift_mean(horizon);
    let mut checks = Vec::new();
    for (r, (regime, track)) in regimes.iter().zip(&tracks).enumerate() {
        let q_t = track.q_at(last);
        let base = r * per_regime;
        for a in 0..d {
            for b in a..d {
                let (estimate, se) = moments.mean_se(base + a * d + b);
                checks.push(MomentCheck {
                    regime: Some(*regime),
                    quantity: "error_cov",
                    i: a,
                    j: b,
                    estimate,
                    se,
                    target: q_t[a * d + b],
                });
            }
        }
        for a in 0..d {
            let (estimate, se) = moments.mean_se(base + d * d + a);
            checks.push(MomentCheck { regime: Some(*regime), quantity: "mean", i: a, j: 0, estimate, se, target: prior_mean[a] });
        }
    }
    Ok(checks)
}

/// Empirical law of `Z_k - μ_{T_k}` pooled over all opinions of `n_mc`
/// paths, against `N(0, Γ)`. Opinions on one path use disjoint `W^J`
/// windows, so the pooled samples are independent.
pub fn expert_noise_check(
    model: &Model,
    scheme: &DateScheme,
    n_mc: usize,
    seed: u64,
    h_max: Option<f64>,
    runner: &Runner,
) -> Result<Vec<MomentCheck>, ExperimentError> {
    let d = model.dim();
    let horizon = model.horizon();
    let h = h_max.unwrap_or_else(|| scheme.default_h_max(horizon));
    let width = d * d + d;
    let moments = runner
        .sum(n_mc, |path| -> Result<Moments, ExperimentError> {
            let mut streams = PathStreams::new(seed, path as u64);
            let dates = scheme_dates(model, scheme, &mut streams);
            let grid = make_grid(model, scheme, &dates, h)?;
            let market = simulate_path(model, scheme, &grid, &mut streams)?;
            let mut acc = Moments { count: 0.0, sum: vec![0.0; width], sq: vec![0.0; width] };
            for op in &market.opinions {
                let mu = market.mu_at(op.node);
                let e: Vec<f64> = op.value.iter().zip(mu).map(|(z, m)| z - m).collect();
                let mut s = Vec::with_capacity(width);
                for a in 0..d {
                    for b in 0..d {
                        s.push(e[a] * e[b]);
                    }
                }
                s.extend_from_slice(&e);
                acc = acc.merge(Moments::from_samples(s));
            }
            Ok(acc)
        })?
        .ok_or_else(|| ExperimentError::Invalid("no paths".into()))?;
    if moments.count < 2.0 {
        return Err(ExperimentError::Invalid("fewer than 2 opinions were drawn".into()));
    }
    let gamma = scheme.expert_covariance(model);
    let mut checks = Vec::new();
    for a in 0..d {
        for b in a..d {
            let (estimate, se) = moments.mean_se(a * d + b);
            checks.push(MomentCheck { regime: None, quantity: "noise_cov", i: a, j: b, estimate, se, target: gamma.get(a, b) });
        }
    }
    for a in 0..d {
        let (estimate, se) = moments.mean_se(d * d + a);
        checks.push(MomentCheck { regime: None, quantity: "noise_mean", i: a, j: 0, estimate, se, target: 0.0 });
    }
    Ok(checks)
}

/// Counts of Loewner-order failures over a set of grids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoewnerReport {
    pub grids: usize,
    pub nodes: usize,
    pub updates: usize,
    /// Nodes with `Q^Z ⪯ Q^R` violated (left limits at dates included).
    pub z_above_r: usize,
    pub j_above_r: usize,
    /// Dates with `Q⁺ ⪯ Q⁻` violated.
    pub update_increase: usize,
}

impl LoewnerReport {
    pub fn holds(&self) -> bool {
        self.z_above_r == 0 && self.j_above_r == 0 && self.update_increase == 0
    }

    fn absorb(&mut self, other: LoewnerReport) {
        self.grids += other.grids;
        self.nodes += other.nodes;
        self.updates += other.updates;
        self.z_above_r += other.z_above_r;
        self.j_above_r += other.j_above_r;
        self.update_increase += other.update_increase;
    }
}

fn loewner_on_grid(model: &Model, scheme: &DateScheme, grid: &TimeGrid, tol: f64) -> Result<LoewnerReport, ExperimentError> {
    let z = CovTrack::for_scheme(model, Regime::Z, scheme, grid)?;
    let j = CovTrack::compute(model, Regime::J, grid, None)?;
    let r = CovTrack::compute(model, Regime::R, grid, None)?;
    let mut rep = LoewnerReport { grids: 1, nodes: grid.len(), updates: z.jumps().len(), ..Default::default() };
    for i in 0..grid.len() {
        let qr = r.q_matrix(i);
        if !loewner_leq(&z.q_matrix(i), &qr, tol)? {
            rep.z_above_r += 1;
        }
        if !loewner_leq(&j.q_matrix(i), &qr, tol)? {
            rep.j_above_r += 1;
        }
    }
    for jump in z.jumps() {
        if !loewner_leq(&jump.pre, &r.q_matrix(jump.node), tol)? {
            rep.z_above_r += 1;
        }
        if !loewner_leq(&z.q_matrix(jump.node), &jump.pre, tol)? {
            rep.update_increase += 1;
        }
    }
    Ok(rep)
}

/// Loewner chain `Q^Z ⪯ Q^R`, `Q^J ⪯ Q^R` and update monotonicity at every
/// node. Poisson schemes check the date sequences of paths `0..paths`.
pub fn loewner_chain(
    model: &Model,
    scheme: &DateScheme,
    paths: usize,
    seed: u64,
    h_max: Option<f64>,
    tol: f64,
) -> Result<LoewnerReport, ExperimentError> {
    let horizon = model.horizon();
    let h = h_max.unwrap_or_else(|| scheme.default_h_max(horizon));
    let mut total = LoewnerReport::default();
    match scheme {
        DateScheme::Deterministic { .. } => {
            let grid = make_grid(model, scheme, &scheme.deterministic_dates(horizon), h)?;
            total.absorb(loewner_on_grid(model, scheme, &grid, tol)?);
        }
        DateScheme::Poisson { .. } => {
            for path in 0..paths {
                let dates = scheme_dates(model, scheme, &mut PathStreams::new(seed, path as u64));
                let grid = make_grid(model, scheme, &dates, h)?;
                total.absorb(loewner_on_grid(model, scheme, &grid, tol)?);
            }
        }
    }
    Ok(total)
}

/// `‖Q - L‖` along a Z trajectory against `C_Q²‖(σ_Jσ_Jᵀ)⁻¹‖/κ`, where
/// `L = Q(Q+κσ_Jσ_Jᵀ)⁻¹κσ_Jσ_Jᵀ` and `C_Q = sup_t ‖Q^R_t‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub kappa: f64,
    pub c_q: f64,
    pub bound: f64,
    pub max_gap: f64,
    pub nodes: usize,
}

impl LemmaReport {
    pub fn holds(&self) -> bool {
        self.max_gap <= self.bound
    }
}

pub fn estimation_lemma(
    model: &Model,
    scheme: &DateScheme,
    seed: u64,
    h_max: Option<f64>,
    stationary_tol: f64,
) -> Result<LemmaReport, ExperimentError> {
    let horizon = model.horizon();
    let h = h_max.unwrap_or_else(|| scheme.default_h_max(horizon));
    let kappa = scheme.intensity(horizon);
    let (_, c_q) = stationary_q(Regime::R, model, stationary_tol)?;
    let gamma = scheme.expert_covariance(model);
    let bound = c_q * c_q * model.expert_precision().norm() / kappa;
    let dates = scheme_dates(model, scheme, &mut PathStreams::new(seed, 0));
    let grid = make_grid(model, scheme, &dates, h)?;
    let z = CovTrack::for_scheme(model, Regime::Z, scheme, &grid)?;
    let gap = |q: &SymMatrix| -> Result<f64, ExperimentError> {
        let right = solve_spd(&q.add(&gamma), gamma.as_matrix())?;
        let l = q.as_matrix().matmul(&right);
        Ok(spectral_norm(&q.as_matrix().sub(&l)))
    };
    let mut max_gap: f64 = 0.0;
    for i in 0..grid.len() {
        max_gap = max_gap.max(gap(&z.q_matrix(i))?);
    }
    for jump in z.jumps() {
        max_gap = max_gap.max(gap(&jump.pre)?);
    }
    Ok(LemmaReport { kappa, c_q, bound, max_gap, nodes: grid.len() + z.jumps().len() })
}

/// Largest deviations of the covariance and mean updates from the
/// precision-form Gaussian posterior over random instances.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorReport {
    pub instances: usize,
    pub max_cov_err: f64,
    pub max_mean_err: f64,
    /// Instances where `Q⁺ ⪯ Q⁻` failed.
    pub not_decreasing: usize,
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
    let a: Vec<f64> = (0..d * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let a = Matrix::from_row_major(d, d, a).expect("square");
    a.gram_t().add(&SymMatrix::identity(d).scale(0.1))
}

pub fn update_posterior_check(instances: usize, max_dim: usize, seed: u64) -> Result<PosteriorReport, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = PosteriorReport { instances, max_cov_err: 0.0, max_mean_err: 0.0, not_decreasing: 0 };
    for _ in 0..instances {
        let d = rng.random_range(1..=max_dim.max(1));
        let q = random_spd(&mut rng, d);
        let gamma = random_spd(&mut rng, d);
        let m: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();

        let qi = q.inverse()?;
        let gi = gamma.inverse()?;
        let post = qi.add(&gi).inverse()?;
        let info: Vec<f64> = qi.mul_vec(&m).iter().zip(gi.mul_vec(&z)).map(|(a, b)| a + b).collect();
        let post_mean = post.mul_vec(&info);

        let q_plus = update_covariance(&q, &gamma)?;
        let m_plus = update_mean(&m, &q, &gamma, &z)?;
        rep.max_cov_err = rep.max_cov_err.max(q_plus.max_abs_diff(&post));
        let me = m_plus.iter().zip(&post_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rep.max_mean_err = rep.max_mean_err.max(me);
        if !loewner_leq(&q_plus, &q, 1e-12)? {
            rep.not_decreasing += 1;
        }
    }
    Ok(rep)
}

/// Stationary Riccati solution by time integration, against the quadratic
/// formula `(-α + √(α² + Mβ²))/M` when the model is scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct RootCheck {
    pub regime: Regime,
    pub computed: SymMatrix,
    pub closed_form: Option<f64>,
}

impl RootCheck {
    pub fn error(&self) -> Option<f64> {
        self.closed_form.map(|c| (self.computed.get(0, 0) - c).abs())
    }
}

pub fn stationary_roots(model: &Model, tol: f64) -> Result<Vec<RootCheck>, ExperimentError> {
    [Regime::R, Regime::J]
        .into_iter()
        .map(|regime| {
            let (computed, _) = stationary_q(regime, model, tol)?;
            let closed_form = (model.dim() == 1).then(|| {
                let a = model.alpha().get(0, 0);
                let b2 = model.beta_beta_t().get(0, 0);
                let mut m = model.return_precision().get(0, 0);
                if regime == Regime::J {
                    m += model.expert_precision().get(0, 0);
                }
                (-a + (a * a + m * b2).sqrt()) / m
            });
            Ok(RootCheck { regime, computed, closed_form })
        })
        .collect()
}
