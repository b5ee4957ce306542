//! Monte Carlo driver with results independent of the worker count.
//!
//! Paths are split into fixed-size chunks; each chunk and then the list of
//! chunk results are combined by pairwise summation in index order. The
//! combination tree depends only on the number of paths, never on how rayon
//! schedules the work.

use rayon::prelude::*;

/// Paths per chunk. Part of the reduction contract: changing it changes the
/// rounding of every MC estimate.
pub const CHUNK: usize = 256;

/// Values that can be combined by addition.
pub trait Merge: Sized {
    fn merge(self, other: Self) -> Self;
}

impl Merge for f64 {
    fn merge(self, other: Self) -> Self {
        self + other
    }
}

impl Merge for Vec<f64> {
    fn merge(mut self, other: Self) -> Self {
        assert_eq!(self.len(), other.len(), "accumulators differ in length");
        for (a, b) in self.iter_mut().zip(other) {
            *a += b;
        }
        self
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(self, other: Self) -> Self {
        (self.0.merge(other.0), self.1.merge(other.1))
    }
}

/// Pairwise (cascade) combination in index order.
pub fn pairwise<A: Merge>(items: Vec<A>) -> Option<A> {
    let mut level = items;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        level = next;
    }
    level.into_iter().next()
}

/// Pairwise sum of a slice of numbers.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

#[derive(Debug, Clone)]
pub struct Runner {
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl Default for Runner {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Runner {
    /// `threads = 0` uses rayon's global pool.
    pub fn new(threads: usize) -> Self {
        let pool = (threads > 0).then(|| {
            std::sync::Arc::new(
                rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool"),
            )
        });
        Self { pool }
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// Evaluates `f` on every path index, returning results in index order.
    pub fn map<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    /// Sum of `f(i)` over `0..n` with the fixed chunked pairwise tree.
    pub fn sum<A, E, F>(&self, n: usize, f: F) -> Result<Option<A>, E>
    where
        A: Merge + Send,
        E: Send,
        F: Fn(usize) -> Result<A, E> + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        let partial: Vec<A> = self.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let items = (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).collect::<Result<Vec<A>, E>>()?;
                    Ok(pairwise(items).expect("nonempty chunk"))
                })
                .collect::<Result<Vec<A>, E>>()
        })?;
        Ok(pairwise(partial))
    }
}

/// Sample mean, standard deviation and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        let sd = var.sqrt();
        Summary { n, mean, sd, se: sd / (n as f64).sqrt() }
    }

    /// Normal-approximation 95% interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.se, self.mean + 1.96 * self.se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_sums() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise(xs.clone()), Some(500_500.0));
        assert_eq!(pairwise::<f64>(Vec::new()), None);
    }

    #[test]
    fn results_do_not_depend_on_threads() {
        let f = |i: usize| -> Result<(f64, Vec<f64>), ()> {
            let x = ((i as f64) * 0.618_033_988_7).fract() * 1e-3 + 1.0 / (i as f64 + 1.0);
            Ok((x, vec![x, x * x]))
        };
        let a = Runner::new(1).sum(5000, f).unwrap().unwrap();
        let b = Runner::new(3).sum(5000, f).unwrap().unwrap();
        let c = Runner::new(8).sum(5000, f).unwrap().unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a, c);
        let ma = Runner::new(1).map(100, |i| Ok::<_, ()>(i * 2)).unwrap();
        let mb = Runner::new(4).map(100, |i| Ok::<_, ()>(i * 2)).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn errors_propagate() {
        let r: Result<Option<f64>, &str> = Runner::new(2).sum(1000, |i| if i == 700 { Err("boom") } else { Ok(1.0) });
        assert_eq!(r, Err("boom"));
    }

    #[test]
    fn summary_of_known_sample() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let (lo, hi) = s.ci95();
        assert!(lo < 2.5 && hi > 2.5);
    }
}
