//! Conditional mean and covariance of the drift for the R-, J-, Z- and
//! F-investors.
//!
//! Covariances solve Riccati equations between information dates and jump
//! through the Gaussian update at each date. They do not depend on the
//! observed data, so [`CovTrack`] is computed once per grid and shared by
//! every path on that grid; [`mean_track`] then runs the mean filter for one
//! path.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::matrix::{kernel, psd_tolerance, solve_spd, Matrix, MatrixError, SymMatrix};
use crate::model::{Model, DateScheme};
use crate::simulate::{MarketPath, TimeGrid};

/// Information regime of an investor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Returns only.
    R,
    /// Returns and the continuous-time expert.
    J,
    /// Returns and discrete expert opinions.
    Z,
    /// Full information: the drift is observed.
    F,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::R, Regime::J, Regime::Z, Regime::F];

    pub fn name(self) -> &'static str {
        match self {
            Regime::R => "R",
            Regime::J => "J",
            Regime::Z => "Z",
            Regime::F => "F",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterError {
    Matrix(MatrixError),
    NotPsd { t: f64, min_eigenvalue: f64 },
    NoConvergence { t: f64, residual: f64 },
    BadStep(f64),
    GridMismatch(&'static str),
}

impl fmt::Display for FilterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterError::Matrix(e) => write!(f, "{e}"),
            FilterError::NotPsd { t, min_eigenvalue } => write!(
                f,
                "Riccati solution lost positive semidefiniteness at t = {t} (min eigenvalue {min_eigenvalue:e}); reduce the step"
            ),
            FilterError::NoConvergence { t, residual } => {
                write!(f, "Riccati equation not stationary by t = {t} (residual {residual:e})")
            }
            FilterError::BadStep(h) => write!(f, "integration step must be positive, found {h}"),
            FilterError::GridMismatch(msg) => write!(f, "path does not match filter: {msg}"),
        }
    }
}

impl core::error::Error for FilterError {}

impl From<MatrixError> for FilterError {
    fn from(e: MatrixError) -> Self {
        FilterError::Matrix(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub m_hat: Vec<f64>,
    pub q: SymMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterJump {
    pub k: usize,
    pub time: f64,
    pub node: usize,
    pub pre: FilterState,
    pub post: FilterState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrajectory {
    pub regime: Regime,
    pub states: Vec<FilterState>,
    pub jumps: Vec<FilterJump>,
}

/// Observation precision entering the Riccati equation of `regime`;
/// `None` for the F-investor.
fn riccati_precision(model: &Model, regime: Regime) -> Option<SymMatrix> {
    match regime {
        Regime::R | Regime::Z => Some(model.return_precision().clone()),
        Regime::J => Some(model.return_precision().add(model.expert_precision())),
        Regime::F => None,
    }
}

/// `-αq - qα + ββᵀ - q M q`, with `M` the observation precision of `regime`.
/// The Z-investor follows the R equation between dates; for F the result is 0.
pub fn riccati_rhs(regime: Regime, model: &Model, q: &SymMatrix) -> SymMatrix {
    let d = model.dim();
    let Some(m) = riccati_precision(model, regime) else {
        return SymMatrix::zeros(d);
    };
    let mut stepper = RiccatiStepper::with_precision(model, m);
    let mut out = vec![0.0; d * d];
    stepper.rhs(q.as_slice(), &mut out);
    SymMatrix::from_row_major(d, out).expect("square")
}

/// Allocation-free RK4 integrator for one Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiStepper {
    d: usize,
    alpha: Vec<f64>,
    bbt: Vec<f64>,
    m: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    psd_tol: f64,
}

impl RiccatiStepper {
    /// Stepper for `regime`; the F-investor has no Riccati equation, and its
    /// stepper integrates `M = 0`.
    pub fn new(model: &Model, regime: Regime) -> Self {
        let m = riccati_precision(model, regime).unwrap_or_else(|| SymMatrix::zeros(model.dim()));
        Self::with_precision(model, m)
    }

    fn with_precision(model: &Model, m: SymMatrix) -> Self {
        let d = model.dim();
        let scale = model.sigma0().norm().max(model.beta_beta_t().norm()).max(1.0);
        Self {
            d,
            alpha: model.alpha().as_slice().to_vec(),
            bbt: model.beta_beta_t().as_slice().to_vec(),
            m: m.as_slice().to_vec(),
            k: [vec![0.0; d * d], vec![0.0; d * d], vec![0.0; d * d], vec![0.0; d * d]],
            stage: vec![0.0; d * d],
            s1: vec![0.0; d * d],
            s2: vec![0.0; d * d],
            psd_tol: psd_tolerance(scale),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn rhs(&mut self, q: &[f64], out: &mut [f64]) {
        rhs_into(self.d, &self.alpha, &self.bbt, &self.m, q, out, &mut self.s1, &mut self.s2);
    }

    /// One classical RK4 step of length `h`, in place.
    pub fn step(&mut self, q: &mut [f64], h: f64) {
        let d = self.d;
        let n = d * d;
        let [k1, k2, k3, k4] = &mut self.k;
        rhs_into(d, &self.alpha, &self.bbt, &self.m, q, k1, &mut self.s1, &mut self.s2);
        for i in 0..n {
            self.stage[i] = q[i] + 0.5 * h * k1[i];
        }
        kernel::symmetrize(&mut self.stage, d);
        rhs_into(d, &self.alpha, &self.bbt, &self.m, &self.stage, k2, &mut self.s1, &mut self.s2);
        for i in 0..n {
            self.stage[i] = q[i] + 0.5 * h * k2[i];
        }
        kernel::symmetrize(&mut self.stage, d);
        rhs_into(d, &self.alpha, &self.bbt, &self.m, &self.stage, k3, &mut self.s1, &mut self.s2);
        for i in 0..n {
            self.stage[i] = q[i] + h * k3[i];
        }
        kernel::symmetrize(&mut self.stage, d);
        rhs_into(d, &self.alpha, &self.bbt, &self.m, &self.stage, k4, &mut self.s1, &mut self.s2);
        for i in 0..n {
            q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        kernel::symmetrize(q, d);
    }

    /// Advances `q` from `t0` to `t1` in `ceil((t1 - t0)/step)` equal RK4 steps.
    pub fn advance(&mut self, q: &mut [f64], t0: f64, t1: f64, step: f64) -> Result<(), FilterError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(FilterError::BadStep(step));
        }
        if t1 <= t0 {
            return Ok(());
        }
        let pieces = math::ceil((t1 - t0) / step - 1e-9).max(1.0) as usize;
        let h = (t1 - t0) / pieces as f64;
        for _ in 0..pieces {
            self.step(q, h);
        }
        self.check_psd(q, t1)
    }

    /// Cheap semidefiniteness check: Cholesky of `q + tol·I` must succeed.
    fn check_psd(&mut self, q: &[f64], t: f64) -> Result<(), FilterError> {
        let d = self.d;
        if d == 1 {
            return if q[0] >= -self.psd_tol {
                Ok(())
            } else {
                Err(FilterError::NotPsd { t, min_eigenvalue: q[0] })
            };
        }
        self.s1.copy_from_slice(q);
        for i in 0..d {
            self.s1[i * d + i] += self.psd_tol;
        }
        if kernel::cholesky_in_place(&mut self.s1, d) && q.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            let min = SymMatrix::from_row_major(d, q.to_vec()).map(|s| s.min_eigenvalue()).unwrap_or(f64::NAN);
            Err(FilterError::NotPsd { t, min_eigenvalue: min })
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn rhs_into(d: usize, alpha: &[f64], bbt: &[f64], m: &[f64], q: &[f64], out: &mut [f64], s1: &mut [f64], s2: &mut [f64]) {
    if d == 1 {
        out[0] = -2.0 * alpha[0] * q[0] + bbt[0] - q[0] * m[0] * q[0];
        return;
    }
    // s1 = αq, out = -(αq + (αq)ᵀ) + ββᵀ, since qα = (αq)ᵀ for symmetric α, q.
    kernel::matmul(alpha, q, s1, d);
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = bbt[i * d + j] - s1[i * d + j] - s1[j * d + i];
        }
    }
    kernel::matmul(q, m, s1, d);
    kernel::matmul(s1, q, s2, d);
    for i in 0..d * d {
        out[i] -= s2[i];
    }
    kernel::symmetrize(out, d);
}

/// Integrates the Riccati equation of `regime` from `q0` at `t0` to `t1`
/// with RK4 substeps of length at most `step`.
pub fn integrate_riccati(
    regime: Regime,
    model: &Model,
    q0: &SymMatrix,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<SymMatrix, FilterError> {
    let mut stepper = RiccatiStepper::new(model, regime);
    let mut q = q0.as_slice().to_vec();
    if regime != Regime::F {
        stepper.advance(&mut q, t0, t1, step)?;
    }
    Ok(SymMatrix::from_row_major(model.dim(), q).expect("square"))
}

/// `Γ(Q+Γ)⁻¹Q`, evaluated as `Q - Q(Q+Γ)⁻¹Q`.
pub fn update_covariance(q_pre: &SymMatrix, gamma: &SymMatrix) -> Result<SymMatrix, FilterError> {
    Ok(Update::new(q_pre, gamma)?.post)
}

/// `ρ m + (I - ρ) z` with `ρ = Γ(Q+Γ)⁻¹`.
pub fn update_mean(m_pre: &[f64], q_pre: &SymMatrix, gamma: &SymMatrix, z: &[f64]) -> Result<Vec<f64>, FilterError> {
    let up = Update::new(q_pre, gamma)?;
    let mut out = m_pre.to_vec();
    up.apply_mean(&mut out, z);
    Ok(out)
}

/// Gain `K = Q(Q+Γ)⁻¹ = I - ρ` and posterior covariance at one information date.
#[derive(Debug, Clone, PartialEq)]
struct Update {
    gain: Matrix,
    post: SymMatrix,
}

impl Update {
    fn new(q: &SymMatrix, gamma: &SymMatrix) -> Result<Self, FilterError> {
        let s = q.add(gamma);
        // (Q+Γ) X = Q gives X = (Q+Γ)⁻¹Q, so K = Xᵀ.
        let x = solve_spd(&s, q.as_matrix())?;
        let gain = x.transpose();
        let post = SymMatrix::from_matrix(q.as_matrix().sub(&gain.matmul(q.as_matrix()))).expect("square");
        Ok(Self { gain, post })
    }

    fn apply_mean(&self, m: &mut [f64], z: &[f64]) {
        let innov: Vec<f64> = z.iter().zip(m.iter()).map(|(z, m)| z - m).collect();
        let corr = self.gain.mul_vec(&innov);
        for (m, c) in m.iter_mut().zip(corr) {
            *m += c;
        }
    }
}

/// Euler step of the mean filter over an interval of length `h`, with `Q`
/// taken at the interval start.
///
/// # Panics
/// If `d_j` is present for a regime other than J, or absent for J.
pub fn propagate_mean(
    regime: Regime,
    model: &Model,
    state: &FilterState,
    d_r: &[f64],
    d_j: Option<&[f64]>,
    h: f64,
) -> Vec<f64> {
    assert_eq!(d_j.is_some(), regime == Regime::J, "expert increment must be given exactly for the J-investor");
    let d = model.dim();
    let gain_r = state.q.as_matrix().matmul(model.return_precision().as_matrix());
    let gain_j = d_j.map(|_| state.q.as_matrix().matmul(model.expert_precision().as_matrix()));
    let mut out = state.m_hat.clone();
    euler_mean_step(
        d,
        model.alpha().as_slice(),
        model.delta(),
        gain_r.as_slice(),
        gain_j.as_ref().map(|g| g.as_slice()),
        &mut out,
        d_r,
        d_j,
        h,
    );
    out
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn euler_mean_step(
    d: usize,
    alpha: &[f64],
    delta: &[f64],
    gain_r: &[f64],
    gain_j: Option<&[f64]>,
    m: &mut [f64],
    d_r: &[f64],
    d_j: Option<&[f64]>,
    h: f64,
) {
    if d == 1 {
        let m0 = m[0];
        let mut v = m0 + alpha[0] * (delta[0] - m0) * h + gain_r[0] * (d_r[0] - m0 * h);
        if let (Some(g), Some(dj)) = (gain_j, d_j) {
            v += g[0] * (dj[0] - m0 * h);
        }
        m[0] = v;
        return;
    }
    let mut incr = [0.0f64; 16];
    let mut innov_r = [0.0f64; 16];
    let mut innov_j = [0.0f64; 16];
    assert!(d <= 16, "mean filter supports d <= 16");
    for i in 0..d {
        innov_r[i] = d_r[i] - m[i] * h;
        if let Some(dj) = d_j {
            innov_j[i] = dj[i] - m[i] * h;
        }
    }
    for i in 0..d {
        let mut s = 0.0;
        for k in 0..d {
            s += alpha[i * d + k] * (delta[k] - m[k]) * h + gain_r[i * d + k] * innov_r[k];
        }
        if let Some(g) = gain_j {
            for k in 0..d {
                s += g[i * d + k] * innov_j[k];
            }
        }
        incr[i] = s;
    }
    for i in 0..d {
        m[i] += incr[i];
    }
}

/// Jump of the covariance at an information date.
#[derive(Debug, Clone, PartialEq)]
pub struct CovJump {
    pub k: usize,
    pub node: usize,
    /// Left limit `Q_{T_k-}`.
    pub pre: SymMatrix,
    gain: Matrix,
}

impl CovJump {
    pub fn gain(&self) -> &Matrix {
        &self.gain
    }
}

/// Conditional covariance of one regime at every node of a grid, holding
/// post-update values at information dates, together with the filter gains
/// `Q M_R` (and `Q M_J`) used by the mean filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CovTrack {
    regime: Regime,
    d: usize,
    q: Vec<f64>,
    gain_r: Vec<f64>,
    gain_j: Vec<f64>,
    jumps: Vec<CovJump>,
}

impl CovTrack {
    /// Covariance along `grid`. The Z-investor updates at the grid's
    /// information dates with `Γ = gamma`; other regimes ignore the dates.
    pub fn compute(model: &Model, regime: Regime, grid: &TimeGrid, gamma: Option<&SymMatrix>) -> Result<CovTrack, FilterError> {
        let d = model.dim();
        let dd = d * d;
        let n = grid.len();
        let mut q = vec![0.0; n * dd];
        let mut jumps = Vec::new();
        if regime != Regime::F {
            let mut stepper = RiccatiStepper::new(model, regime);
            let mut cur = model.sigma0().as_slice().to_vec();
            q[..dd].copy_from_slice(&cur);
            let date_nodes = if regime == Regime::Z { grid.date_nodes() } else { &[] };
            if !date_nodes.is_empty() && gamma.is_none() {
                return Err(FilterError::GridMismatch("expert covariance required for dated updates"));
            }
            let mut next_date = 0;
            for i in 0..grid.intervals() {
                stepper.step(&mut cur, grid.step(i));
                let node = i + 1;
                if next_date < date_nodes.len() && date_nodes[next_date] == node {
                    stepper.check_psd(&cur, grid.nodes()[node])?;
                    let pre = SymMatrix::from_symmetric_unchecked(d, cur.clone());
                    let up = Update::new(&pre, gamma.expect("checked above"))?;
                    cur.copy_from_slice(up.post.as_slice());
                    jumps.push(CovJump { k: next_date + 1, node, pre, gain: up.gain });
                    next_date += 1;
                }
                q[node * dd..(node + 1) * dd].copy_from_slice(&cur);
            }
            stepper.check_psd(&cur, *grid.nodes().last().expect("nonempty grid"))?;
        }
        let gain_of = |prec: &SymMatrix| {
            let mut g = vec![0.0; n * dd];
            for i in 0..n {
                kernel::matmul(&q[i * dd..(i + 1) * dd], prec.as_slice(), &mut g[i * dd..(i + 1) * dd], d);
            }
            g
        };
        let gain_r = gain_of(model.return_precision());
        let gain_j = if regime == Regime::J { gain_of(model.expert_precision()) } else { Vec::new() };
        Ok(CovTrack { regime, d, q, gain_r, gain_j, jumps })
    }

    /// Track for `scheme` on `grid`, taking `Γ` from the scheme.
    pub fn for_scheme(model: &Model, regime: Regime, scheme: &DateScheme, grid: &TimeGrid) -> Result<CovTrack, FilterError> {
        let gamma = scheme.expert_covariance(model);
        Self::compute(model, regime, grid, Some(&gamma))
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn len(&self) -> usize {
        self.q.len() / (self.d * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Flat `d×d` covariance at node `i` (post-update at dates).
    #[inline]
    pub fn q_at(&self, i: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.q[i * dd..(i + 1) * dd]
    }

    pub fn q_matrix(&self, i: usize) -> SymMatrix {
        SymMatrix::from_symmetric_unchecked(self.d, self.q_at(i).to_vec())
    }

    pub fn jumps(&self) -> &[CovJump] {
        &self.jumps
    }
}

/// Conditional mean at every node, flat with `d` entries per node.
pub fn mean_track(model: &Model, cov: &CovTrack, path: &MarketPath, out: &mut Vec<f64>) -> Result<(), FilterError> {
    let d = model.dim();
    let n = path.grid.len();
    if cov.len() != n {
        return Err(FilterError::GridMismatch("covariance track and path have different grids"));
    }
    out.clear();
    if cov.regime == Regime::F {
        out.extend_from_slice(&path.mu);
        return Ok(());
    }
    out.resize(n * d, 0.0);
    out[..d].copy_from_slice(model.m0());
    let dd = d * d;
    let alpha = model.alpha().as_slice();
    let delta = model.delta();
    let jumps = if cov.regime == Regime::Z { cov.jumps.as_slice() } else { &[] };
    if jumps.len() > path.opinions.len() {
        return Err(FilterError::GridMismatch("fewer opinions than information dates"));
    }
    let mut next_jump = 0;
    for i in 0..n - 1 {
        let (done, rest) = out.split_at_mut((i + 1) * d);
        let m = &mut rest[..d];
        m.copy_from_slice(&done[i * d..]);
        let gain_j = (cov.regime == Regime::J).then(|| &cov.gain_j[i * dd..(i + 1) * dd]);
        let d_j = (cov.regime == Regime::J).then(|| path.expert_at(i));
        euler_mean_step(d, alpha, delta, &cov.gain_r[i * dd..(i + 1) * dd], gain_j, m, path.returns_at(i), d_j, path.grid.step(i));
        if next_jump < jumps.len() && jumps[next_jump].node == i + 1 {
            let jump = &jumps[next_jump];
            let z = &path.opinions[next_jump].value;
            if d == 1 {
                m[0] += jump.gain.as_slice()[0] * (z[0] - m[0]);
            } else {
                let innov: Vec<f64> = z.iter().zip(m.iter()).map(|(z, m)| z - m).collect();
                let corr = jump.gain.mul_vec(&innov);
                for (v, c) in m.iter_mut().zip(corr) {
                    *v += c;
                }
            }
            next_jump += 1;
        }
    }
    Ok(())
}

/// Full filter trajectory of `regime` along `path`.
pub fn run_filter(regime: Regime, model: &Model, scheme: &DateScheme, path: &MarketPath) -> Result<FilterTrajectory, FilterError> {
    let cov = CovTrack::for_scheme(model, regime, scheme, &path.grid)?;
    let mut means = Vec::new();
    mean_track(model, &cov, path, &mut means)?;
    let d = model.dim();
    let nodes = path.grid.nodes();
    let state = |i: usize, q: SymMatrix, m: &[f64]| FilterState { t: nodes[i], m_hat: m.to_vec(), q };
    let states: Vec<FilterState> =
        (0..path.grid.len()).map(|i| state(i, cov.q_matrix(i), &means[i * d..(i + 1) * d])).collect();
    let mut jumps = Vec::with_capacity(cov.jumps.len());
    if regime == Regime::Z {
        let mut m_pre_buf = vec![0.0; d];
        for (j, jump) in cov.jumps.iter().enumerate() {
            let i = jump.node;
            // Recover the pre-update mean from the post value: m⁺ = m⁻ + K(z - m⁻),
            // so (I - K) m⁻ = m⁺ - K z.
            let z = &path.opinions[j].value;
            let m_post = &means[i * d..(i + 1) * d];
            let kz = jump.gain.mul_vec(z);
            let rhs: Vec<f64> = m_post.iter().zip(&kz).map(|(a, b)| a - b).collect();
            let i_minus_k = Matrix::identity(d).sub(&jump.gain);
            m_pre_buf.copy_from_slice(&solve_general(&i_minus_k, &rhs));
            jumps.push(FilterJump {
                k: jump.k,
                time: nodes[i],
                node: i,
                pre: state(i, jump.pre.clone(), &m_pre_buf),
                post: states[i].clone(),
            });
        }
    }
    Ok(FilterTrajectory { regime, states, jumps })
}

/// Gaussian elimination with partial pivoting for a small square system.
fn solve_general(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = a.as_slice().to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| math::abs(m[i * n + col]).total_cmp(&math::abs(m[j * n + col]))).unwrap();
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let p = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / p;
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for k in (r + 1)..n {
            s -= m[r * n + k] * x[k];
        }
        x[r] = s / m[r * n + r];
    }
    x
}

/// Stationary covariance of the Riccati equation of `regime`, obtained by
/// integrating from `Σ₀` until `‖rhs‖ ≤ tol`. The second value is
/// `sup_t ‖Q_t‖` along the way.
pub fn stationary_q(regime: Regime, model: &Model, tol: f64) -> Result<(SymMatrix, f64), FilterError> {
    let d = model.dim();
    if regime == Regime::F {
        return Ok((SymMatrix::zeros(d), 0.0));
    }
    let m = riccati_precision(model, regime).expect("not F");
    let lam_min = model.alpha_min_eigenvalue();
    // Q stays below max(‖Σ₀‖, ‖ββᵀ‖/(2λ_min(α))), which bounds the stiffness.
    let q_bound = model.sigma0().norm().max(model.beta_beta_t().norm() / (2.0 * lam_min));
    let rate = 2.0 * model.alpha().norm() + 2.0 * m.norm() * q_bound;
    let h = 0.02 / rate.max(1e-12);
    let t_max = 100.0 / lam_min;
    let mut stepper = RiccatiStepper::with_precision(model, m);
    let mut q = model.sigma0().as_slice().to_vec();
    let mut rhs = vec![0.0; d * d];
    let mut sup = SymMatrix::from_row_major(d, q.clone()).expect("square").norm();
    let mut t = 0.0;
    loop {
        stepper.rhs(&q, &mut rhs);
        let residual = frobenius(&rhs);
        if residual <= tol {
            break;
        }
        if t >= t_max {
            return Err(FilterError::NoConvergence { t, residual });
        }
        stepper.step(&mut q, h);
        t += h;
        let norm = if d == 1 { math::abs(q[0]) } else { SymMatrix::from_row_major(d, q.clone()).expect("square").norm() };
        sup = sup.max(norm);
    }
    stepper.check_psd(&q, t)?;
    Ok((SymMatrix::from_row_major(d, q).expect("square"), sup))
}

fn frobenius(a: &[f64]) -> f64 {
    math::norm2(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::simulate::{make_grid, simulate_indexed};

    fn table1() -> Model {
        ModelParams::table1().validate().unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rhs_examples() {
        let m = table1();
        let r = riccati_rhs(Regime::R, &m, &SymMatrix::scalar(0.125));
        assert!(close(r.get(0, 0), 0.0, 1e-14));
        let qj = (-6.0 + 200f64.sqrt()) / 82.0;
        let r = riccati_rhs(Regime::J, &m, &SymMatrix::scalar(qj));
        assert!(r.get(0, 0).abs() <= 1e-9);
        assert_eq!(riccati_rhs(Regime::Z, &m, &SymMatrix::scalar(0.125)).get(0, 0), riccati_rhs(Regime::R, &m, &SymMatrix::scalar(0.125)).get(0, 0));

        let mut p = ModelParams::table1();
        p.beta = Matrix::scalar(0.0);
        let m0 = p.validate().unwrap();
        assert_eq!(riccati_rhs(Regime::R, &m0, &SymMatrix::scalar(0.0)).get(0, 0), 0.0);
    }

    #[test]
    fn rhs_matches_matrix_formula_in_2d() {
        let p = ModelParams {
            alpha: Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap(),
            beta: Matrix::from_rows(&[[0.3, 0.1], [0.0, 0.4]]).unwrap(),
            delta: vec![0.05, 0.02],
            sigma_r: Matrix::from_rows(&[[0.2, 0.05], [0.0, 0.3]]).unwrap(),
            sigma_j: Matrix::from_rows(&[[0.25, 0.0], [0.1, 0.2]]).unwrap(),
            m0: vec![0.05, 0.02],
            sigma0: Matrix::from_rows(&[[0.1, 0.02], [0.02, 0.05]]).unwrap(),
            horizon: 1.0,
            rate: 0.0,
        };
        let model = p.validate().unwrap();
        let q = SymMatrix::from_row_major(2, vec![0.2, 0.03, 0.03, 0.1]).unwrap();
        let a = model.alpha().as_matrix();
        let mj = model.return_precision().add(model.expert_precision());
        let expected = a
            .matmul(q.as_matrix())
            .scale(-1.0)
            .sub(&q.as_matrix().matmul(a))
            .add(model.beta_beta_t().as_matrix())
            .sub(&q.as_matrix().matmul(mj.as_matrix()).matmul(q.as_matrix()));
        let got = riccati_rhs(Regime::J, &model, &q);
        assert!(got.as_matrix().max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn integrate_examples() {
        let m = table1();
        let q0 = SymMatrix::scalar(0.2);
        assert_eq!(integrate_riccati(Regime::R, &m, &q0, 0.3, 0.3, 0.01).unwrap(), q0);
        let long = integrate_riccati(Regime::R, &m, &q0, 0.0, 20.0, 1e-3).unwrap();
        assert!(close(long.get(0, 0), 0.125, 1e-6));
    }

    #[test]
    fn rk4_order() {
        let m = table1();
        let q0 = SymMatrix::scalar(0.2);
        let reference = integrate_riccati(Regime::J, &m, &q0, 0.0, 1.0, 1e-5).unwrap().get(0, 0);
        let e1 = (integrate_riccati(Regime::J, &m, &q0, 0.0, 1.0, 0.004).unwrap().get(0, 0) - reference).abs();
        let e2 = (integrate_riccati(Regime::J, &m, &q0, 0.0, 1.0, 0.002).unwrap().get(0, 0) - reference).abs();
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn closed_form_scalar_riccati() {
        // q' = -(q - a)(q - b)M with roots a > 0 > b; q0 = 1 for the reference model.
        let m = table1();
        let (mm, bb, al) = (16.0f64, 1.0f64, 3.0f64);
        let disc = (al * al + mm * bb).sqrt();
        let (a, b) = ((-al + disc) / mm, (-al - disc) / mm);
        let q0 = 1.0;
        let c = (q0 - a) / (q0 - b);
        let t = 1.0;
        let e = c * (-mm * (a - b) * t).exp();
        let exact = (a - b * e) / (1.0 - e);
        let q = integrate_riccati(Regime::R, &m, &SymMatrix::scalar(q0), 0.0, t, 1e-3).unwrap().get(0, 0);
        assert!(close(q, exact, 1e-10), "{q} vs {exact}");
    }

    #[test]
    fn update_examples() {
        let c = SymMatrix::scalar(0.3);
        assert!(close(update_covariance(&c, &c).unwrap().get(0, 0), 0.15, 1e-15));
        let q = SymMatrix::from_diag(&[0.2, 0.2]);
        let huge = SymMatrix::from_diag(&[1e12, 1e12]);
        assert!(update_covariance(&q, &huge).unwrap().max_abs_diff(&q) < 1e-12);
        let q = SymMatrix::scalar(0.2);
        let g = SymMatrix::scalar(0.4);
        assert!(close(update_covariance(&q, &g).unwrap().get(0, 0), 2.0 / 15.0, 1e-15));

        assert_eq!(update_mean(&[0.05], &q, &g, &[0.05]).unwrap(), vec![0.05]);
        let eq = update_mean(&[0.05], &c, &c, &[0.07]).unwrap();
        assert!(close(eq[0], 0.06, 1e-15));
        let m = update_mean(&[0.05], &q, &g, &[0.07]).unwrap();
        assert!(close(m[0], 0.05 * 2.0 / 3.0 + 0.07 / 3.0, 1e-15));
        assert!(close(m[0], 0.056667, 1e-6));
    }

    #[test]
    fn propagate_examples() {
        let m = table1();
        let zero = FilterState { t: 0.0, m_hat: vec![0.1], q: SymMatrix::scalar(0.0) };
        let out = propagate_mean(Regime::R, &m, &zero, &[123.0], None, 0.01);
        assert!(close(out[0], 0.1 + 3.0 * (0.05 - 0.1) * 0.01, 1e-15));
        let at_delta = FilterState { t: 0.0, m_hat: vec![0.05], q: SymMatrix::scalar(0.0) };
        assert_eq!(propagate_mean(Regime::R, &m, &at_delta, &[7.0], None, 0.01), vec![0.05]);
        let s = FilterState { t: 0.0, m_hat: vec![0.04], q: SymMatrix::scalar(0.1) };
        let out = propagate_mean(Regime::J, &m, &s, &[0.001], Some(&[0.002]), 0.01);
        let expected = 0.04 + 3.0 * 0.01 * 0.01 + 0.1 * 16.0 * (0.001 - 0.0004) + 0.1 * 25.0 * (0.002 - 0.0004);
        assert!(close(out[0], expected, 1e-15));
    }

    #[test]
    #[should_panic]
    fn propagate_requires_expert_increment_for_j() {
        let m = table1();
        let s = FilterState { t: 0.0, m_hat: vec![0.04], q: SymMatrix::scalar(0.1) };
        propagate_mean(Regime::J, &m, &s, &[0.001], None, 0.01);
    }

    #[test]
    fn z_without_dates_is_r() {
        let m = table1();
        let s = DateScheme::Poisson { lambda: 5.0 };
        let grid = make_grid(&m, &s, &[], 1e-3).unwrap();
        let mut streams = crate::rng::PathStreams::new(4, 0);
        let path = crate::simulate::simulate_path(&m, &s, &grid, &mut streams).unwrap();
        let r = run_filter(Regime::R, &m, &s, &path).unwrap();
        let mut z = run_filter(Regime::Z, &m, &s, &path).unwrap();
        assert!(z.jumps.is_empty());
        z.regime = Regime::R;
        assert_eq!(r, z);
    }

    #[test]
    fn f_is_truth() {
        let m = table1();
        let s = DateScheme::Deterministic { n: 5 };
        let path = simulate_indexed(&m, &s, 1e-3, &[], 1, 0).unwrap();
        let f = run_filter(Regime::F, &m, &s, &path).unwrap();
        for (i, st) in f.states.iter().enumerate() {
            assert_eq!(st.q.get(0, 0), 0.0);
            assert_eq!(st.m_hat[0], path.mu_at(i)[0]);
        }
    }

    #[test]
    fn r_terminal_matches_closed_form() {
        let m = table1();
        let s = DateScheme::Deterministic { n: 10 };
        let path = simulate_indexed(&m, &s, s.default_h_max(1.0), &[], 1, 0).unwrap();
        let r = run_filter(Regime::R, &m, &s, &path).unwrap();
        let mm = 16.0f64;
        let disc = (9.0 + mm).sqrt();
        let (a, b) = ((-3.0 + disc) / mm, (-3.0 - disc) / mm);
        let c = (0.2 - a) / (0.2 - b);
        let e = c * (-mm * (a - b)).exp();
        let exact = (a - b * e) / (1.0 - e);
        assert!(close(r.states.last().unwrap().q.get(0, 0), exact, 1e-4));
    }

    #[test]
    fn z_jumps_recorded_and_monotone() {
        let m = table1();
        let s = DateScheme::Deterministic { n: 10 };
        let path = simulate_indexed(&m, &s, 1e-3, &[], 2, 0).unwrap();
        let z = run_filter(Regime::Z, &m, &s, &path).unwrap();
        assert_eq!(z.jumps.len(), 10);
        let gamma = s.expert_covariance(&m);
        for j in &z.jumps {
            assert!(j.post.q.get(0, 0) <= j.pre.q.get(0, 0));
            let expected = update_mean(&j.pre.m_hat, &j.pre.q, &gamma, &path.opinions[j.k - 1].value).unwrap();
            assert!(close(expected[0], j.post.m_hat[0], 1e-12));
        }
    }

    #[test]
    fn stationary_examples() {
        let m = table1();
        let (qr, c_q) = stationary_q(Regime::R, &m, 1e-12).unwrap();
        assert!(close(qr.get(0, 0), 0.125, 1e-9));
        assert!(close(c_q, 0.2, 1e-15));
        let (qj, _) = stationary_q(Regime::J, &m, 1e-12).unwrap();
        assert!(close(qj.get(0, 0), (-6.0 + 200f64.sqrt()) / 82.0, 1e-9));
        let mut p = ModelParams::table1();
        p.beta = Matrix::scalar(0.0);
        let m0 = p.validate().unwrap();
        let (q0, _) = stationary_q(Regime::R, &m0, 1e-12).unwrap();
        assert!(q0.get(0, 0).abs() < 1e-9);
    }
}
