//! Reproducible per-path random streams.
//!
//! A root seed fixes the ChaCha key; each (path, role) pair selects its own
//! 64-bit ChaCha stream id. Paths can therefore be simulated in any order,
//! on any number of workers, and still see the same numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    /// Drift noise `B` (and the initial draw of `μ₀`).
    Drift = 0,
    /// Return noise `W^R`.
    Returns = 1,
    /// Expert noise `W^J`.
    Expert = 2,
    /// Poisson information dates.
    Dates = 3,
}

/// Stream for one role of one path.
pub fn stream(seed: u64, path: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((path << 2) | role as u64);
    rng
}

/// The four independent streams driving one market path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub drift: ChaCha8Rng,
    pub returns: ChaCha8Rng,
    pub expert: ChaCha8Rng,
    pub dates: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(seed: u64, path: u64) -> Self {
        Self {
            drift: stream(seed, path, StreamRole::Drift),
            returns: stream(seed, path, StreamRole::Returns),
            expert: stream(seed, path, StreamRole::Expert),
            dates: stream(seed, path, StreamRole::Dates),
        }
    }
}

/// Fills `out` with independent `N(0, scale²)` draws.
#[inline]
pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], scale: f64) {
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * scale;
    }
}

/// One `Exponential(lambda)` draw.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    rng.sample(Exp::new(lambda).expect("positive intensity"))
}
