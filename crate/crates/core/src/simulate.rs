//! Coupled simulation of the hidden drift, returns, continuous expert and
//! discrete expert opinions on a shared time grid.
//!
//! The drift moves by its exact Gaussian transition between nodes. Return
//! and expert increments use left-endpoint Euler–Maruyama steps. Expert
//! opinions reuse the same `W^J` increments that drive `J`, extended past
//! the horizon when an opinion window ends after `T`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::math;
use crate::matrix::kernel;
use crate::model::{DateScheme, Model, OuTransition};
use crate::rng::{self, PathStreams};

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    BadDates(&'static str),
    BadStep(f64),
    GridMismatch(&'static str),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::BadDates(msg) => write!(f, "bad information dates: {msg}"),
            SimError::BadStep(h) => write!(f, "grid spacing must be positive, found {h}"),
            SimError::GridMismatch(msg) => write!(f, "grid does not match scheme: {msg}"),
        }
    }
}

impl core::error::Error for SimError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Plain,
    /// Information date `T_k`, `k` counted from 1.
    InfoDate(usize),
}

/// Strictly increasing time nodes starting at 0 and ending at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    kinds: Vec<NodeKind>,
    date_nodes: Vec<usize>,
    breaks: Vec<usize>,
    tol: f64,
}

impl TimeGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    #[inline]
    pub fn step(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Node indices of the information dates, in date order.
    pub fn date_nodes(&self) -> &[usize] {
        &self.date_nodes
    }

    /// Node indices of the breakpoints (0, `T`, dates and forced nodes);
    /// the grid is uniform between consecutive breakpoints.
    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    pub fn dates(&self) -> Vec<f64> {
        self.date_nodes.iter().map(|&i| self.nodes[i]).collect()
    }

    /// Index of the node at time `t`, if one lies within the merge tolerance.
    pub fn node_at(&self, t: f64) -> Option<usize> {
        let idx = self.nodes.partition_point(|&x| x < t - self.tol);
        (idx < self.nodes.len() && math::abs(self.nodes[idx] - t) <= self.tol).then_some(idx)
    }

    /// Last node at or before `t`.
    pub fn node_before(&self, t: f64) -> usize {
        self.nodes
            .partition_point(|&x| x <= t + self.tol)
            .saturating_sub(1)
    }
}

/// End of the `k`-th expert window `[(k-1)/λ, k/λ]`.
#[inline]
pub fn poisson_window_end(k: usize, lambda: f64) -> f64 {
    k as f64 / lambda
}

/// Grid containing `0`, `T`, every date and (for the Poisson scheme) every
/// expert-window boundary below `T`, with spacing at most `h_max`.
pub fn make_grid(
    model: &Model,
    scheme: &DateScheme,
    dates: &[f64],
    h_max: f64,
) -> Result<TimeGrid, SimError> {
    make_grid_with_nodes(model, scheme, dates, h_max, &[])
}

/// As [`make_grid`], additionally forcing plain nodes at `extra` times in `(0, T)`.
pub fn make_grid_with_nodes(
    model: &Model,
    scheme: &DateScheme,
    dates: &[f64],
    h_max: f64,
    extra: &[f64],
) -> Result<TimeGrid, SimError> {
    let horizon = model.horizon();
    let mut forced = extra.to_vec();
    if let DateScheme::Poisson { lambda } = *scheme {
        for k in 1..=dates.len() {
            let b = poisson_window_end(k, lambda);
            if b >= horizon {
                break;
            }
            forced.push(b);
        }
    }
    build_grid(horizon, dates, h_max, &forced, 1)
}

/// Grid on `[0, horizon]` through `dates` and `extra`, splitting every gap
/// between consecutive breakpoints into at least `min_pieces` equal steps
/// no longer than `h_max`.
pub fn build_grid(
    horizon: f64,
    dates: &[f64],
    h_max: f64,
    extra: &[f64],
    min_pieces: usize,
) -> Result<TimeGrid, SimError> {
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(SimError::BadStep(h_max));
    }
    if dates.iter().any(|&t| !(t > 0.0 && t <= horizon)) {
        return Err(SimError::BadDates("every date must lie in (0, T]"));
    }
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::BadDates("dates must be strictly increasing"));
    }
    let tol = 1e-12 * horizon;

    let mut breaks: Vec<(f64, NodeKind)> = Vec::with_capacity(2 * dates.len() + extra.len() + 2);
    breaks.push((0.0, NodeKind::Plain));
    breaks.push((horizon, NodeKind::Plain));
    breaks.extend(
        dates
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, NodeKind::InfoDate(i + 1))),
    );
    breaks.extend(
        extra
            .iter()
            .filter(|&&t| t > 0.0 && t < horizon)
            .map(|&t| (t, NodeKind::Plain)),
    );
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut merged: Vec<(f64, NodeKind)> = Vec::with_capacity(breaks.len());
    for (t, kind) in breaks {
        match merged.last_mut() {
            Some(last) if t - last.0 <= tol => {
                if let NodeKind::InfoDate(_) = kind {
                    if let NodeKind::InfoDate(_) = last.1 {
                        return Err(SimError::BadDates(
                            "two dates closer than the grid tolerance",
                        ));
                    }
                    *last = (t, kind);
                }
            }
            _ => merged.push((t, kind)),
        }
    }

    let mut nodes = Vec::new();
    let mut kinds = Vec::new();
    let mut date_nodes = Vec::with_capacity(dates.len());
    let mut breaks = Vec::with_capacity(merged.len());
    breaks.push(0);
    nodes.push(0.0);
    kinds.push(merged[0].1);
    for w in merged.windows(2) {
        let (a, b) = (w[0].0, w[1].0);
        let pieces = (math::ceil((b - a) / h_max - 1e-9) as usize).max(min_pieces.max(1));
        for i in 1..pieces {
            nodes.push(a + (b - a) * i as f64 / pieces as f64);
            kinds.push(NodeKind::Plain);
        }
        nodes.push(b);
        kinds.push(w[1].1);
        breaks.push(nodes.len() - 1);
        if let NodeKind::InfoDate(_) = w[1].1 {
            date_nodes.push(nodes.len() - 1);
        }
    }
    Ok(TimeGrid {
        nodes,
        kinds,
        date_nodes,
        breaks,
        tol,
    })
}

/// Jump times of a Poisson process with intensity `lambda` on `(0, horizon]`.
pub fn sample_poisson_dates<R: Rng + ?Sized>(lambda: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut dates = Vec::new();
    let mut t = rng::exponential(rng, lambda);
    while t <= horizon {
        dates.push(t);
        t += rng::exponential(rng, lambda);
    }
    dates
}

/// Information dates for `scheme`, drawn from the date stream when random.
pub fn scheme_dates(model: &Model, scheme: &DateScheme, streams: &mut PathStreams) -> Vec<f64> {
    match *scheme {
        DateScheme::Deterministic { .. } => scheme.deterministic_dates(model.horizon()),
        DateScheme::Poisson { lambda } => {
            sample_poisson_dates(lambda, model.horizon(), &mut streams.dates)
        }
    }
}

/// Expert opinion `Z_k` delivered at node `node` (time `time`).
#[derive(Debug, Clone, PartialEq)]
pub struct Opinion {
    pub k: usize,
    pub time: f64,
    pub node: usize,
    pub value: Vec<f64>,
    /// `W^J` window whose increment perturbs the opinion.
    pub window: (f64, f64),
}

/// `W^J` increment over `[start, end]` with `start ≥ T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSegment {
    pub start: f64,
    pub end: f64,
    pub incr: Vec<f64>,
}

/// One coupled realization on a grid. Per-node and per-interval quantities
/// are stored flat, row `i` holding the vector for node (or interval) `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub grid: TimeGrid,
    dim: usize,
    noise_r: usize,
    noise_j: usize,
    pub mu: Vec<f64>,
    pub returns_incr: Vec<f64>,
    pub expert_incr: Vec<f64>,
    pub wr_incr: Vec<f64>,
    pub wj_incr: Vec<f64>,
    pub wj_tail: Vec<TailSegment>,
    pub opinions: Vec<Opinion>,
}

impl MarketPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn mu_at(&self, node: usize) -> &[f64] {
        &self.mu[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn returns_at(&self, interval: usize) -> &[f64] {
        &self.returns_incr[interval * self.dim..(interval + 1) * self.dim]
    }

    #[inline]
    pub fn expert_at(&self, interval: usize) -> &[f64] {
        &self.expert_incr[interval * self.dim..(interval + 1) * self.dim]
    }

    #[inline]
    pub fn wr_at(&self, interval: usize) -> &[f64] {
        &self.wr_incr[interval * self.noise_r..(interval + 1) * self.noise_r]
    }

    #[inline]
    pub fn wj_at(&self, interval: usize) -> &[f64] {
        &self.wj_incr[interval * self.noise_j..(interval + 1) * self.noise_j]
    }

    /// Path on every `factor`-th node of this grid, with noise increments
    /// summed and Euler increments recomputed from the coarse left endpoints.
    ///
    /// Returns `None` when the breakpoints do not fall on the coarse grid.
    pub fn coarsen(&self, model: &Model, factor: usize) -> Option<MarketPath> {
        let n_int = self.grid.intervals();
        if factor == 0
            || n_int % factor != 0
            || self.grid.breaks.iter().any(|&i| i % factor != 0)
        {
            return None;
        }
        let (d, m, l) = (self.dim, self.noise_r, self.noise_j);
        let coarse_nodes: Vec<f64> = self.grid.nodes.iter().step_by(factor).copied().collect();
        let kinds: Vec<NodeKind> = self.grid.kinds.iter().step_by(factor).copied().collect();
        let date_nodes = self.grid.date_nodes.iter().map(|i| i / factor).collect();
        let breaks = self.grid.breaks.iter().map(|i| i / factor).collect();
        let grid = TimeGrid {
            nodes: coarse_nodes,
            kinds,
            date_nodes,
            breaks,
            tol: self.grid.tol,
        };
        let n_coarse = grid.intervals();
        let mut mu = Vec::with_capacity((n_coarse + 1) * d);
        for i in 0..=n_coarse {
            mu.extend_from_slice(self.mu_at(i * factor));
        }
        let mut wr = vec![0.0; n_coarse * m];
        let mut wj = vec![0.0; n_coarse * l];
        for c in 0..n_coarse {
            for f in c * factor..(c + 1) * factor {
                for (a, b) in wr[c * m..(c + 1) * m].iter_mut().zip(self.wr_at(f)) {
                    *a += b;
                }
                for (a, b) in wj[c * l..(c + 1) * l].iter_mut().zip(self.wj_at(f)) {
                    *a += b;
                }
            }
        }
        let mut returns_incr = vec![0.0; n_coarse * d];
        let mut expert_incr = vec![0.0; n_coarse * d];
        for c in 0..n_coarse {
            let h = grid.step(c);
            euler_increment(
                &mu[c * d..(c + 1) * d],
                h,
                model.sigma_r().as_slice(),
                &wr[c * m..(c + 1) * m],
                &mut returns_incr[c * d..(c + 1) * d],
            );
            euler_increment(
                &mu[c * d..(c + 1) * d],
                h,
                model.sigma_j().as_slice(),
                &wj[c * l..(c + 1) * l],
                &mut expert_incr[c * d..(c + 1) * d],
            );
        }
        let opinions = self
            .opinions
            .iter()
            .map(|o| Opinion {
                node: o.node / factor,
                ..o.clone()
            })
            .collect();
        Some(MarketPath {
            grid,
            dim: d,
            noise_r: m,
            noise_j: l,
            mu,
            returns_incr,
            expert_incr,
            wr_incr: wr,
            wj_incr: wj,
            wj_tail: self.wj_tail.clone(),
            opinions,
        })
    }
}

/// `out = μ h + σ ΔW`.
#[inline]
fn euler_increment(mu: &[f64], h: f64, sigma: &[f64], dw: &[f64], out: &mut [f64]) {
    let cols = dw.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = mu[i] * h;
        for k in 0..cols {
            s += sigma[i * cols + k] * dw[k];
        }
        *o = s;
    }
}

struct TransitionCache {
    entries: Vec<OuTransition>,
    next: usize,
}

impl TransitionCache {
    const SLOTS: usize = 8;

    fn new() -> Self {
        Self {
            entries: Vec::with_capacity(Self::SLOTS),
            next: 0,
        }
    }

    fn get(&mut self, model: &Model, h: f64) -> usize {
        if let Some(i) = self
            .entries
            .iter()
            .position(|t| t.h.to_bits() == h.to_bits())
        {
            return i;
        }
        let tr = model.ou_transition(h);
        if self.entries.len() < Self::SLOTS {
            self.entries.push(tr);
            self.entries.len() - 1
        } else {
            let slot = self.next;
            self.entries[slot] = tr;
            self.next = (self.next + 1) % Self::SLOTS;
            slot
        }
    }
}

fn check_grid(model: &Model, scheme: &DateScheme, grid: &TimeGrid) -> Result<(), SimError> {
    for (k, &node) in grid.date_nodes.iter().enumerate() {
        if grid.kinds[node] != NodeKind::InfoDate(k + 1) {
            return Err(SimError::GridMismatch("date flags out of order"));
        }
    }
    match *scheme {
        DateScheme::Deterministic { n } => {
            if grid.date_nodes.len() != n {
                return Err(SimError::GridMismatch(
                    "deterministic scheme needs exactly n dates",
                ));
            }
            let expected = scheme.deterministic_dates(model.horizon());
            for (&node, t) in grid.date_nodes.iter().zip(expected) {
                if math::abs(grid.nodes[node] - t) > grid.tol {
                    return Err(SimError::GridMismatch("deterministic dates must be kT/n"));
                }
            }
        }
        DateScheme::Poisson { lambda } => {
            for k in 1..=grid.date_nodes.len() {
                let b = poisson_window_end(k, lambda);
                if b >= model.horizon() {
                    break;
                }
                if grid.node_at(b).is_none() {
                    return Err(SimError::GridMismatch("missing expert-window node"));
                }
            }
        }
    }
    Ok(())
}

/// Simulates one coupled market path on `grid`.
pub fn simulate_path(
    model: &Model,
    scheme: &DateScheme,
    grid: &TimeGrid,
    streams: &mut PathStreams,
) -> Result<MarketPath, SimError> {
    check_grid(model, scheme, grid)?;
    let d = model.dim();
    let m = model.return_noise_dim();
    let l = model.expert_noise_dim();
    let n_int = grid.intervals();
    let horizon = model.horizon();

    let mut mu = vec![0.0; (n_int + 1) * d];
    let mut xi = vec![0.0; d];
    rng::fill_normal(&mut streams.drift, &mut xi, 1.0);
    let s0 = model.sigma0_sqrt().as_slice();
    kernel::mat_vec(s0, &xi, &mut mu[..d], d, d);
    for (v, m0) in mu[..d].iter_mut().zip(model.m0()) {
        *v += m0;
    }

    let mut wr = vec![0.0; n_int * m];
    let mut wj = vec![0.0; n_int * l];
    let mut returns_incr = vec![0.0; n_int * d];
    let mut expert_incr = vec![0.0; n_int * d];
    let mut cache = TransitionCache::new();
    let mut noise = vec![0.0; d];
    let sr = model.sigma_r().as_slice();
    let sj = model.sigma_j().as_slice();

    for i in 0..n_int {
        let h = grid.step(i);
        let sqh = math::sqrt(h);
        rng::fill_normal(&mut streams.drift, &mut xi, 1.0);
        rng::fill_normal(&mut streams.returns, &mut wr[i * m..(i + 1) * m], sqh);
        rng::fill_normal(&mut streams.expert, &mut wj[i * l..(i + 1) * l], sqh);

        let (left, right) = mu.split_at_mut((i + 1) * d);
        let mu_i = &left[i * d..];
        euler_increment(
            mu_i,
            h,
            sr,
            &wr[i * m..(i + 1) * m],
            &mut returns_incr[i * d..(i + 1) * d],
        );
        euler_increment(
            mu_i,
            h,
            sj,
            &wj[i * l..(i + 1) * l],
            &mut expert_incr[i * d..(i + 1) * d],
        );

        let slot = cache.get(model, h);
        let tr = &cache.entries[slot];
        let next = &mut right[..d];
        kernel::mat_vec(tr.decay.as_slice(), mu_i, next, d, d);
        kernel::mat_vec(tr.noise.as_slice(), &xi, &mut noise, d, d);
        for j in 0..d {
            next[j] += tr.shift[j] + noise[j];
        }
    }

    // Opinions: Z_k = μ_{T_k} + κ σ_J (W^J_b − W^J_a) on the scheme's window.
    let kappa = scheme.intensity(horizon);
    let mut tail: Vec<TailSegment> = Vec::new();
    let mut opinions = Vec::with_capacity(grid.date_nodes.len());
    let mut dw = vec![0.0; l];
    let mut z = vec![0.0; d];
    for (idx, &node) in grid.date_nodes.iter().enumerate() {
        let k = idx + 1;
        let (a, b) = match *scheme {
            DateScheme::Deterministic { n } => {
                let start = grid.nodes[node];
                let end = if k < n {
                    grid.nodes[grid.date_nodes[idx + 1]]
                } else {
                    horizon + horizon / n as f64
                };
                (start, end)
            }
            DateScheme::Poisson { lambda } => {
                let start = if k == 1 {
                    0.0
                } else {
                    poisson_window_end(k - 1, lambda)
                };
                (start, poisson_window_end(k, lambda))
            }
        };
        dw.iter_mut().for_each(|v| *v = 0.0);
        if a < horizon - grid.tol {
            let ia = grid
                .node_at(a)
                .ok_or(SimError::GridMismatch("window start not on grid"))?;
            let ib = if b < horizon - grid.tol {
                grid.node_at(b)
                    .ok_or(SimError::GridMismatch("window end not on grid"))?
            } else {
                n_int
            };
            for i in ia..ib {
                for (acc, v) in dw.iter_mut().zip(&wj[i * l..(i + 1) * l]) {
                    *acc += v;
                }
            }
        }
        if b > horizon + grid.tol {
            let start = a.max(horizon);
            let start = tail
                .last()
                .map_or(start, |s: &TailSegment| s.end.max(start));
            let mut incr = vec![0.0; l];
            rng::fill_normal(&mut streams.expert, &mut incr, math::sqrt(b - start));
            for (acc, v) in dw.iter_mut().zip(&incr) {
                *acc += v;
            }
            tail.push(TailSegment {
                start,
                end: b,
                incr,
            });
        }
        kernel::mat_vec(sj, &dw, &mut z, d, l);
        let mu_k = &mu[node * d..(node + 1) * d];
        let value: Vec<f64> = mu_k.iter().zip(&z).map(|(m, e)| m + kappa * e).collect();
        opinions.push(Opinion {
            k,
            time: grid.nodes[node],
            node,
            value,
            window: (a, b),
        });
    }

    Ok(MarketPath {
        grid: grid.clone(),
        dim: d,
        noise_r: m,
        noise_j: l,
        mu,
        returns_incr,
        expert_incr,
        wr_incr: wr,
        wj_incr: wj,
        wj_tail: tail,
        opinions,
    })
}

/// Dates, grid and path for path index `path` under `seed`.
pub fn simulate_indexed(
    model: &Model,
    scheme: &DateScheme,
    h_max: f64,
    extra_nodes: &[f64],
    seed: u64,
    path: u64,
) -> Result<MarketPath, SimError> {
    let mut streams = PathStreams::new(seed, path);
    let dates = scheme_dates(model, scheme, &mut streams);
    let grid = make_grid_with_nodes(model, scheme, &dates, h_max, extra_nodes)?;
    simulate_path(model, scheme, &grid, &mut streams)
}
