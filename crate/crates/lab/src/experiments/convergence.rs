use driftlab_core::filter::{mean_track, CovTrack, Regime};
use driftlab_core::rng::PathStreams;
use driftlab_core::simulate::{make_grid, make_grid_with_nodes, scheme_dates, simulate_path, MarketPath, TimeGrid};
use driftlab_core::value::terminal_log_wealth;
use driftlab_core::{DateScheme, Model};

use super::{level_of, same_kind, sym_diff_norm, vec_norm, ConvergenceReport, Diagnostic, ExperimentError, Quantity};
use crate::config::SchemeKind;
use crate::mc::{Merge, Runner, Summary};

/// Grid spacing shared by every level: the explicit `h_max`, or the finest
/// scheme default among the levels.
fn common_h(model: &Model, schemes: &[DateScheme], h_max: Option<f64>) -> f64 {
    h_max.unwrap_or_else(|| {
        schemes.iter().map(|s| s.default_h_max(model.horizon())).fold(f64::INFINITY, f64::min)
    })
}

/// Largest covariance gap over the grid, with left limits at dates counted.
struct CovGaps {
    full: f64,
    post_only: f64,
    tail: f64,
}

fn cov_gaps(model: &Model, grid: &TimeGrid, z: &CovTrack, j: &CovTrack) -> CovGaps {
    let d = model.dim();
    let half = 0.5 * model.horizon();
    let nodes = grid.nodes();
    let mut gaps = CovGaps { full: 0.0, post_only: 0.0, tail: 0.0 };
    for i in 0..grid.len() {
        let g = sym_diff_norm(z.q_at(i), j.q_at(i), d);
        gaps.post_only = gaps.post_only.max(g);
        if nodes[i] >= half {
            gaps.tail = gaps.tail.max(g);
        }
    }
    gaps.full = gaps.post_only;
    for jump in z.jumps() {
        let g = sym_diff_norm(jump.pre.as_slice(), j.q_at(jump.node), d);
        gaps.full = gaps.full.max(g);
        if nodes[jump.node] >= half {
            gaps.tail = gaps.tail.max(g);
        }
    }
    gaps
}

/// `sup_t ‖Q^{Z,n}_t - Q^J_t‖` for each `n`, on grids of a common spacing.
///
/// The supremum runs over every grid node and includes the left limits
/// `Q^Z_{t_k-}`. Two diagnostics are reported alongside: the supremum over
/// post-update values only, and the supremum restricted to `t ≥ T/2`.
pub fn cov_error_deterministic(
    model: &Model,
    schemes: &[DateScheme],
    h_max: Option<f64>,
) -> Result<ConvergenceReport, ExperimentError> {
    if same_kind(schemes)? != SchemeKind::Deterministic {
        return Err(ExperimentError::Invalid("cov_error_deterministic needs deterministic schemes".into()));
    }
    let h = common_h(model, schemes, h_max);
    let mut full = Vec::new();
    let mut post = Vec::new();
    let mut tail = Vec::new();
    for s in schemes {
        let grid = make_grid(model, s, &s.deterministic_dates(model.horizon()), h)?;
        let z = CovTrack::for_scheme(model, Regime::Z, s, &grid)?;
        let j = CovTrack::compute(model, Regime::J, &grid, None)?;
        let g = cov_gaps(model, &grid, &z, &j);
        full.push(g.full);
        post.push(g.post_only);
        tail.push(g.tail);
    }
    let levels: Vec<f64> = schemes.iter().map(level_of).collect();
    let diagnostics = vec![
        Diagnostic::new("post_update_sup", &levels, post),
        Diagnostic::new("tail_sup", &levels, tail),
    ];
    let n = levels.len();
    Ok(ConvergenceReport::build(
        Quantity::CovSup,
        SchemeKind::Deterministic,
        levels,
        full,
        vec![None; n],
        1.0,
        Some(-1.0),
        diagnostics,
        None,
        None,
        vec![h; n],
    ))
}

/// `E[sup_t ‖Q^{Z,λ}_t - Q^J_t‖^p]` for each `λ`, by Monte Carlo over the
/// information dates. Both covariances are integrated on the same per-path grid.
pub fn cov_error_poisson(
    model: &Model,
    schemes: &[DateScheme],
    p: f64,
    n_mc: usize,
    seed: u64,
    h_max: Option<f64>,
    runner: &Runner,
) -> Result<ConvergenceReport, ExperimentError> {
    if same_kind(schemes)? != SchemeKind::Poisson {
        return Err(ExperimentError::Invalid("cov_error_poisson needs Poisson schemes".into()));
    }
    let mut errors = Vec::new();
    let mut ses = Vec::new();
    let mut post = Vec::new();
    let mut hs = Vec::new();
    for s in schemes {
        let h = h_max.unwrap_or_else(|| s.default_h_max(model.horizon()));
        hs.push(h);
        let samples = runner.map(n_mc, |path| -> Result<(f64, f64), ExperimentError> {
            let mut streams = PathStreams::new(seed, path as u64);
            let dates = scheme_dates(model, s, &mut streams);
            let grid = make_grid(model, s, &dates, h)?;
            let z = CovTrack::for_scheme(model, Regime::Z, s, &grid)?;
            let j = CovTrack::compute(model, Regime::J, &grid, None)?;
            let g = cov_gaps(model, &grid, &z, &j);
            Ok((g.full.powf(p), g.post_only.powf(p)))
        })?;
        let full: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let post_only: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let sm = Summary::of(&full);
        errors.push(sm.mean);
        ses.push(Some(sm.se));
        post.push(Summary::of(&post_only).mean);
    }
    let levels: Vec<f64> = schemes.iter().map(level_of).collect();
    let diagnostics = vec![Diagnostic::new("post_update_moment", &levels, post)];
    Ok(ConvergenceReport::build(
        Quantity::CovMoment,
        SchemeKind::Poisson,
        levels,
        errors,
        ses,
        p,
        Some(-(p / 2.0).min(1.0)),
        diagnostics,
        Some(n_mc),
        Some(seed),
        hs,
    ))
}

/// Grid and covariance tracks for one path. Deterministic schemes share one
/// instance across all paths; Poisson schemes need a fresh one per path.
struct Prepared {
    grid: TimeGrid,
    z: CovTrack,
    j: CovTrack,
    r: Option<CovTrack>,
}

fn prepare(
    model: &Model,
    scheme: &DateScheme,
    dates: &[f64],
    h: f64,
    extra: &[f64],
    with_r: bool,
) -> Result<Prepared, ExperimentError> {
    let grid = make_grid_with_nodes(model, scheme, dates, h, extra)?;
    let z = CovTrack::for_scheme(model, Regime::Z, scheme, &grid)?;
    let j = CovTrack::compute(model, Regime::J, &grid, None)?;
    let r = if with_r { Some(CovTrack::compute(model, Regime::R, &grid, None)?) } else { None };
    Ok(Prepared { grid, z, j, r })
}

fn shared_setup(
    model: &Model,
    scheme: &DateScheme,
    h: f64,
    extra: &[f64],
    with_r: bool,
) -> Result<Option<Prepared>, ExperimentError> {
    match scheme {
        DateScheme::Deterministic { .. } => {
            Ok(Some(prepare(model, scheme, &scheme.deterministic_dates(model.horizon()), h, extra, with_r)?))
        }
        DateScheme::Poisson { .. } => Ok(None),
    }
}

/// Simulates path `path` and hands it to `per_path` with its grid and tracks.
#[allow(clippy::too_many_arguments)]
fn run_path<T>(
    model: &Model,
    scheme: &DateScheme,
    shared: &Option<Prepared>,
    h: f64,
    extra: &[f64],
    with_r: bool,
    seed: u64,
    path: usize,
    per_path: &(impl Fn(&Prepared, &MarketPath) -> Result<T, ExperimentError> + Sync),
) -> Result<T, ExperimentError> {
    let mut streams = PathStreams::new(seed, path as u64);
    let local;
    let prep = match shared {
        Some(p) => p,
        None => {
            let dates = scheme_dates(model, scheme, &mut streams);
            local = prepare(model, scheme, &dates, h, extra, with_r)?;
            &local
        }
    };
    let market = simulate_path(model, scheme, &prep.grid, &mut streams)?;
    per_path(prep, &market)
}

/// Runs `per_path` on `n_mc` coupled paths of `scheme` and returns the
/// results in path order.
#[allow(clippy::too_many_arguments)]
fn on_paths<T, F>(
    model: &Model,
    scheme: &DateScheme,
    h: f64,
    extra: &[f64],
    with_r: bool,
    n_mc: usize,
    seed: u64,
    runner: &Runner,
    per_path: F,
) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(&Prepared, &MarketPath) -> Result<T, ExperimentError> + Sync + Send,
{
    let shared = shared_setup(model, scheme, h, extra, with_r)?;
    runner.map(n_mc, |path| run_path(model, scheme, &shared, h, extra, with_r, seed, path, &per_path))
}

/// As [`on_paths`], summing the per-path results with the fixed reduction tree.
#[allow(clippy::too_many_arguments)]
fn sum_over_paths<A, F>(
    model: &Model,
    scheme: &DateScheme,
    h: f64,
    extra: &[f64],
    n_mc: usize,
    seed: u64,
    runner: &Runner,
    per_path: F,
) -> Result<A, ExperimentError>
where
    A: Merge + Send,
    F: Fn(&Prepared, &MarketPath) -> Result<A, ExperimentError> + Sync + Send,
{
    let shared = shared_setup(model, scheme, h, extra, false)?;
    runner
        .sum(n_mc, |path| run_path(model, scheme, &shared, h, extra, false, seed, path, &per_path))?
        .ok_or_else(|| ExperimentError::Invalid("no paths".into()))
}

/// Sample times `jT/c`, `j = 1..=c`.
pub fn checkpoints(horizon: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|j| if j == count { horizon } else { j as f64 * horizon / count as f64 }).collect()
}

/// `max_j E‖m̂^Z_{t_j} - m̂^J_{t_j}‖^p` over checkpoints `t_j = jT/c`, per level.
///
/// Both filters run on the same path. With `full_sup` the checkpoints are
/// every node of a uniform grid of spacing `h`.
#[allow(clippy::too_many_arguments)]
pub fn mean_error(
    model: &Model,
    schemes: &[DateScheme],
    p: f64,
    n_checkpoints: usize,
    full_sup: bool,
    n_mc: usize,
    seed: u64,
    h_max: Option<f64>,
    runner: &Runner,
) -> Result<ConvergenceReport, ExperimentError> {
    let kind = same_kind(schemes)?;
    if n_mc < 2 {
        return Err(ExperimentError::Invalid("mean_error needs at least 2 paths".into()));
    }
    let horizon = model.horizon();
    let d = model.dim();
    let mut errors = Vec::new();
    let mut ses = Vec::new();
    let mut at_t = Vec::new();
    let mut hs = Vec::new();
    for s in schemes {
        let h = h_max.unwrap_or_else(|| s.default_h_max(horizon));
        hs.push(h);
        let count = if full_sup { (horizon / h).ceil() as usize } else { n_checkpoints };
        let times = checkpoints(horizon, count);
        let interior = &times[..times.len() - 1];
        let (sum, sum_sq): (Vec<f64>, Vec<f64>) = sum_over_paths(model, s, h, interior, n_mc, seed, runner, |prep, market| {
            let mut mz = Vec::new();
            let mut mj = Vec::new();
            mean_track(model, &prep.z, market, &mut mz)?;
            mean_track(model, &prep.j, market, &mut mj)?;
            let mut v = Vec::with_capacity(times.len());
            for &t in &times {
                let i = prep.grid.node_at(t).ok_or_else(|| ExperimentError::Invalid("checkpoint missing".into()))?;
                v.push(vec_norm(&mz[i * d..(i + 1) * d], &mj[i * d..(i + 1) * d]).powf(p));
            }
            let sq = v.iter().map(|x| x * x).collect();
            Ok((v, sq))
        })?;
        let nf = n_mc as f64;
        let mut best: Option<(f64, f64)> = None;
        for (s1, s2) in sum.iter().zip(&sum_sq) {
            let mean = s1 / nf;
            let var = ((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0);
            if best.is_none_or(|b| mean > b.0) {
                best = Some((mean, (var / nf).sqrt()));
            }
        }
        let last = sum.last().expect("at least one checkpoint") / nf;
        let best = best.expect("at least one checkpoint");
        errors.push(best.0);
        ses.push(Some(best.1));
        at_t.push(last);
    }
    let levels: Vec<f64> = schemes.iter().map(level_of).collect();
    let expected = match kind {
        SchemeKind::Deterministic => -p / 2.0,
        SchemeKind::Poisson => -(p / 2.0).min(1.0) / 2.0,
    };
    let diagnostics = vec![Diagnostic::new("moment_at_horizon", &levels, at_t)];
    Ok(ConvergenceReport::build(
        Quantity::MeanMoment,
        kind,
        levels,
        errors,
        ses,
        p,
        Some(expected),
        diagnostics,
        Some(n_mc),
        Some(seed),
        hs,
    ))
}

/// `E|log X^Z_T - log X^J_T|` under the two optimal log-utility strategies
/// on common paths. The R-vs-J gap is reported as a diagnostic baseline.
pub fn pathwise_utility_gap(
    model: &Model,
    schemes: &[DateScheme],
    x0: f64,
    n_mc: usize,
    seed: u64,
    h_max: Option<f64>,
    runner: &Runner,
) -> Result<ConvergenceReport, ExperimentError> {
    let kind = same_kind(schemes)?;
    let horizon = model.horizon();
    let mut errors = Vec::new();
    let mut ses = Vec::new();
    let mut baseline = Vec::new();
    let mut hs = Vec::new();
    for s in schemes {
        let h = h_max.unwrap_or_else(|| s.default_h_max(horizon));
        hs.push(h);
        let rows = on_paths(model, s, h, &[], true, n_mc, seed, runner, |prep, market| {
            let mut m = Vec::new();
            mean_track(model, &prep.z, market, &mut m)?;
            let lz = terminal_log_wealth(model, market, &m, x0);
            mean_track(model, &prep.j, market, &mut m)?;
            let lj = terminal_log_wealth(model, market, &m, x0);
            mean_track(model, prep.r.as_ref().expect("requested"), market, &mut m)?;
            let lr = terminal_log_wealth(model, market, &m, x0);
            Ok(((lz - lj).abs(), (lr - lj).abs()))
        })?;
        let gaps: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let base: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let sm = Summary::of(&gaps);
        errors.push(sm.mean);
        ses.push(Some(sm.se));
        baseline.push(Summary::of(&base).mean);
    }
    let levels: Vec<f64> = schemes.iter().map(level_of).collect();
    let diagnostics = vec![Diagnostic::new("r_vs_j_gap", &levels, baseline)];
    Ok(ConvergenceReport::build(
        Quantity::UtilityGap,
        kind,
        levels,
        errors,
        ses,
        1.0,
        None,
        diagnostics,
        Some(n_mc),
        Some(seed),
        hs,
    ))
}
