//! Market parameters and the unconditional moments of the drift.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::matrix::{psd_tolerance, spd_floor, Matrix, SymEigen, SymMatrix};

/// Raw model constants, as read from a config file.
///
/// Shapes: `alpha`, `beta`, `sigma0` are `d×d`; `sigma_r` is `d×m`;
/// `sigma_j` is `d×l`; `delta` and `m0` have length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub alpha: Matrix,
    pub beta: Matrix,
    pub delta: Vec<f64>,
    pub sigma_r: Matrix,
    pub sigma_j: Matrix,
    pub m0: Vec<f64>,
    pub sigma0: Matrix,
    pub horizon: f64,
    pub rate: f64,
}

impl ModelParams {
    /// One-asset reference parameter set (the bundled `table1.cfg`).
    pub fn table1() -> Self {
        Self::scalar(3.0, 1.0, 0.05, 0.25, 0.2, 0.05, 0.2, 1.0)
    }

    /// One-dimensional model from scalar constants, with `r = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        alpha: f64,
        beta: f64,
        delta: f64,
        sigma_r: f64,
        sigma_j: f64,
        m0: f64,
        sigma0: f64,
        horizon: f64,
    ) -> Self {
        Self {
            alpha: Matrix::scalar(alpha),
            beta: Matrix::scalar(beta),
            delta: alloc::vec![delta],
            sigma_r: Matrix::scalar(sigma_r),
            sigma_j: Matrix::scalar(sigma_j),
            m0: alloc::vec![m0],
            sigma0: Matrix::scalar(sigma0),
            horizon,
            rate: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha.rows()
    }

    /// Checks every model assumption and collects all violations.
    pub fn validate(self) -> Result<Model, ValidationError> {
        let mut issues = Vec::new();
        let d = self.alpha.rows();

        if d == 0 {
            push(&mut issues, "alpha", "dimension must be at least 1".into());
        }
        let square = |m: &Matrix| m.rows() == d && m.cols() == d;
        if !square(&self.alpha) {
            push(
                &mut issues,
                "alpha",
                format!(
                    "expected {d}x{d}, found {}x{}",
                    self.alpha.rows(),
                    self.alpha.cols()
                ),
            );
        }
        if !square(&self.beta) {
            push(
                &mut issues,
                "beta",
                format!(
                    "expected {d}x{d}, found {}x{}",
                    self.beta.rows(),
                    self.beta.cols()
                ),
            );
        }
        if !square(&self.sigma0) {
            push(
                &mut issues,
                "sigma0",
                format!(
                    "expected {d}x{d}, found {}x{}",
                    self.sigma0.rows(),
                    self.sigma0.cols()
                ),
            );
        }
        if self.delta.len() != d {
            push(
                &mut issues,
                "delta",
                format!("expected length {d}, found {}", self.delta.len()),
            );
        }
        if self.m0.len() != d {
            push(
                &mut issues,
                "m0",
                format!("expected length {d}, found {}", self.m0.len()),
            );
        }
        if self.sigma_r.rows() != d || self.sigma_r.cols() < d {
            push(
                &mut issues,
                "sigma_r",
                format!(
                    "expected {d}xm with m >= {d}, found {}x{}",
                    self.sigma_r.rows(),
                    self.sigma_r.cols()
                ),
            );
        }
        if self.sigma_j.rows() != d || self.sigma_j.cols() < d {
            push(
                &mut issues,
                "sigma_j",
                format!(
                    "expected {d}xl with l >= {d}, found {}x{}",
                    self.sigma_j.rows(),
                    self.sigma_j.cols()
                ),
            );
        }
        let finite = [
            ("alpha", self.alpha.is_finite()),
            ("beta", self.beta.is_finite()),
            ("sigma_r", self.sigma_r.is_finite()),
            ("sigma_j", self.sigma_j.is_finite()),
            ("sigma0", self.sigma0.is_finite()),
            ("delta", self.delta.iter().all(|v| v.is_finite())),
            ("m0", self.m0.iter().all(|v| v.is_finite())),
            ("rate", self.rate.is_finite()),
        ];
        for (field, ok) in finite {
            if !ok {
                push(&mut issues, field, "entries must be finite".into());
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            push(
                &mut issues,
                "horizon",
                format!("must be positive and finite, found {}", self.horizon),
            );
        }

        // The spectral checks only make sense once shapes are right.
        let shapes_ok = issues.is_empty();
        let mut derived = None;
        if shapes_ok {
            let alpha_ok = check_symmetric(&self.alpha);
            if !alpha_ok {
                push(&mut issues, "alpha", "must be symmetric".into());
            }
            let alpha = SymMatrix::from_matrix(self.alpha.clone()).expect("square");
            let alpha_eig = alpha.eigen();
            let floor = spd_floor(alpha.norm());
            if alpha_eig.min() <= floor {
                push(
                    &mut issues,
                    "alpha",
                    format!(
                        "not positive definite (min eigenvalue {:e})",
                        alpha_eig.min()
                    ),
                );
            }

            let sr_sr = self.sigma_r.gram();
            let sr_min = sr_sr.min_eigenvalue();
            if sr_min <= spd_floor(sr_sr.norm()) {
                push(
                    &mut issues,
                    "sigma_r",
                    format!("rank deficient (min eigenvalue of sigma_r sigma_r^T {sr_min:e})"),
                );
            }
            let sj_sj = self.sigma_j.gram();
            let sj_min = sj_sj.min_eigenvalue();
            if sj_min <= spd_floor(sj_sj.norm()) {
                push(
                    &mut issues,
                    "sigma_j",
                    format!("rank deficient (min eigenvalue of sigma_j sigma_j^T {sj_min:e})"),
                );
            }

            if !check_symmetric(&self.sigma0) {
                push(&mut issues, "sigma0", "must be symmetric".into());
            }
            let sigma0 = SymMatrix::from_matrix(self.sigma0.clone()).expect("square");
            let s0_min = sigma0.min_eigenvalue();
            if s0_min < -psd_tolerance(sigma0.norm()) {
                push(
                    &mut issues,
                    "sigma0",
                    format!("not positive semidefinite (min eigenvalue {s0_min:e})"),
                );
            }
            derived = Some((alpha, alpha_eig, sr_sr, sj_sj, sigma0));
        }

        if !issues.is_empty() {
            return Err(ValidationError { issues });
        }
        let (alpha, alpha_eig, sr_sr, sj_sj, sigma0) = derived.expect("checked above");
        let sr_inv = sr_sr.inverse().expect("checked positive definite");
        let sj_inv = sj_sj.inverse().expect("checked positive definite");
        let bbt = self.beta.gram();
        let sigma0_sqrt = sigma0.sqrt().expect("checked PSD");
        Ok(Model {
            params: self,
            alpha,
            alpha_eig,
            bbt,
            sr_sr,
            sj_sj,
            sr_inv,
            sj_inv,
            sigma0,
            sigma0_sqrt,
        })
    }
}

fn check_symmetric(m: &Matrix) -> bool {
    let n = m.rows();
    (0..n).all(|i| {
        (0..i).all(|j| {
            let (a, b) = (m.get(i, j), m.get(j, i));
            math::abs(a - b) <= 1e-12 * (1.0 + math::abs(a).max(math::abs(b)))
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub field: &'static str,
    pub message: String,
}

/// Every violated model assumption, in check order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl ValidationError {
    pub fn mentions(&self, field: &str) -> bool {
        self.issues.iter().any(|i| i.field == field)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model validation failed:")?;
        for issue in &self.issues {
            write!(f, " [{}] {};", issue.field, issue.message)?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationError {}

/// Validated model with derived matrices cached.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    alpha: SymMatrix,
    alpha_eig: SymEigen,
    bbt: SymMatrix,
    sr_sr: SymMatrix,
    sj_sj: SymMatrix,
    sr_inv: SymMatrix,
    sj_inv: SymMatrix,
    sigma0: SymMatrix,
    sigma0_sqrt: SymMatrix,
}

impl Model {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.alpha.dim()
    }

    /// Dimension of the return-driving Brownian motion.
    pub fn return_noise_dim(&self) -> usize {
        self.params.sigma_r.cols()
    }

    /// Dimension of the expert-driving Brownian motion.
    pub fn expert_noise_dim(&self) -> usize {
        self.params.sigma_j.cols()
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    pub fn alpha(&self) -> &SymMatrix {
        &self.alpha
    }

    pub fn delta(&self) -> &[f64] {
        &self.params.delta
    }

    pub fn m0(&self) -> &[f64] {
        &self.params.m0
    }

    pub fn sigma0(&self) -> &SymMatrix {
        &self.sigma0
    }

    pub fn sigma0_sqrt(&self) -> &SymMatrix {
        &self.sigma0_sqrt
    }

    pub fn sigma_r(&self) -> &Matrix {
        &self.params.sigma_r
    }

    pub fn sigma_j(&self) -> &Matrix {
        &self.params.sigma_j
    }

    /// `β βᵀ`.
    pub fn beta_beta_t(&self) -> &SymMatrix {
        &self.bbt
    }

    /// `σ_R σ_Rᵀ`.
    pub fn return_cov(&self) -> &SymMatrix {
        &self.sr_sr
    }

    /// `σ_J σ_Jᵀ`.
    pub fn expert_cov(&self) -> &SymMatrix {
        &self.sj_sj
    }

    /// `(σ_R σ_Rᵀ)⁻¹`.
    pub fn return_precision(&self) -> &SymMatrix {
        &self.sr_inv
    }

    /// `(σ_J σ_Jᵀ)⁻¹`.
    pub fn expert_precision(&self) -> &SymMatrix {
        &self.sj_inv
    }

    /// Smallest eigenvalue of `α`.
    pub fn alpha_min_eigenvalue(&self) -> f64 {
        self.alpha_eig.min()
    }

    /// `e^{-α t}` through the eigenbasis of `α`.
    pub fn exp_neg_alpha(&self, t: f64) -> SymMatrix {
        self.alpha_eig.reconstruct_with(|l| math::exp(-l * t))
    }

    /// `∫₀ʰ e^{-αs} ββᵀ e^{-αs} ds`, the covariance accumulated by the drift
    /// over a step of length `h`.
    pub fn ou_step_cov(&self, h: f64) -> SymMatrix {
        let d = self.dim();
        let v = &self.alpha_eig.vectors;
        let lam = &self.alpha_eig.values;
        // C = Vᵀ ββᵀ V, then scale entrywise by (1 - e^{-(λi+λj)h})/(λi+λj).
        let c = self.bbt.congruence(&v.transpose());
        let mut scaled = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let s = lam[i] + lam[j];
                let w = if s * h < 1e-300 {
                    h
                } else {
                    -math::expm1(-s * h) / s
                };
                scaled.set(i, j, c.get(i, j) * w);
            }
        }
        let scaled = SymMatrix::from_matrix(scaled).expect("square");
        scaled.congruence(v)
    }

    /// Exact one-step transition of the drift over a step of length `h`.
    pub fn ou_transition(&self, h: f64) -> OuTransition {
        let decay = self.exp_neg_alpha(h);
        let d = self.dim();
        let mut shift = alloc::vec![0.0; d];
        // (I - e^{-αh}) δ
        for i in 0..d {
            let mut s = self.params.delta[i];
            for j in 0..d {
                s -= decay.get(i, j) * self.params.delta[j];
            }
            shift[i] = s;
        }
        let cov = self.ou_step_cov(h);
        let noise = cov.sqrt().expect("transition covariance is PSD");
        OuTransition {
            h,
            decay,
            shift,
            noise,
        }
    }

    /// `E[μ_t] = δ + e^{-αt}(m₀ - δ)`.
    pub fn drift_mean(&self, t: f64) -> Vec<f64> {
        let e = self.exp_neg_alpha(t);
        let diff: Vec<f64> = self
            .params
            .m0
            .iter()
            .zip(&self.params.delta)
            .map(|(m, d)| m - d)
            .collect();
        let decayed = e.mul_vec(&diff);
        self.params
            .delta
            .iter()
            .zip(decayed)
            .map(|(d, x)| d + x)
            .collect()
    }

    /// `cov(μ_t) = e^{-αt} Σ₀ e^{-αt} + ∫₀ᵗ e^{-αs} ββᵀ e^{-αs} ds`.
    pub fn drift_cov(&self, t: f64) -> SymMatrix {
        let e = self.exp_neg_alpha(t);
        self.sigma0
            .congruence(e.as_matrix())
            .add(&self.ou_step_cov(t))
    }
}

/// Exact Gaussian transition `μ_{t+h} = decay·μ_t + shift + noise·ξ`.
#[derive(Debug, Clone)]
pub struct OuTransition {
    pub h: f64,
    pub decay: SymMatrix,
    pub shift: Vec<f64>,
    /// Symmetric square root of the step covariance.
    pub noise: SymMatrix,
}

/// How information dates are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DateScheme {
    /// `n` equidistant dates `kT/n`, `k = 1..=n`.
    Deterministic { n: usize },
    /// Jump times of a Poisson process with intensity `lambda`.
    Poisson { lambda: f64 },
}

impl DateScheme {
    pub fn check(&self) -> Result<(), SchemeError> {
        match *self {
            DateScheme::Deterministic { n: 0 } => Err(SchemeError::ZeroDates),
            DateScheme::Poisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(SchemeError::BadIntensity(lambda))
            }
            _ => Ok(()),
        }
    }

    /// Expert-noise scaling `κ`: `1/Δ_n` or `λ`.
    pub fn intensity(&self, horizon: f64) -> f64 {
        match *self {
            DateScheme::Deterministic { n } => n as f64 / horizon,
            DateScheme::Poisson { lambda } => lambda,
        }
    }

    /// `Δ_n = T/n` for the deterministic scheme.
    pub fn spacing(&self, horizon: f64) -> Option<f64> {
        match *self {
            DateScheme::Deterministic { n } => Some(horizon / n as f64),
            DateScheme::Poisson { .. } => None,
        }
    }

    /// Expert covariance `Γ = κ σ_J σ_Jᵀ`.
    pub fn expert_covariance(&self, model: &Model) -> SymMatrix {
        model.expert_cov().scale(self.intensity(model.horizon()))
    }

    /// `min(Δ_n, 1/λ, T/1000) / 4`.
    pub fn default_h_max(&self, horizon: f64) -> f64 {
        let window = match *self {
            DateScheme::Deterministic { n } => horizon / n as f64,
            DateScheme::Poisson { lambda } => 1.0 / lambda,
        };
        window.min(horizon / 1000.0) / 4.0
    }

    /// Equidistant dates for the deterministic scheme; empty otherwise.
    pub fn deterministic_dates(&self, horizon: f64) -> Vec<f64> {
        match *self {
            DateScheme::Deterministic { n } => (1..=n)
                .map(|k| {
                    if k == n {
                        horizon
                    } else {
                        k as f64 * horizon / n as f64
                    }
                })
                .collect(),
            DateScheme::Poisson { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeError {
    ZeroDates,
    BadIntensity(f64),
}

impl fmt::Display for SchemeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeError::ZeroDates => write!(f, "deterministic scheme needs n >= 1"),
            SchemeError::BadIntensity(l) => {
                write!(f, "Poisson intensity must be positive, found {l}")
            }
        }
    }
}

impl core::error::Error for SchemeError {}

fn push(issues: &mut Vec<Issue>, field: &'static str, message: String) {
    issues.push(Issue { field, message });
}
