//! Monte-Carlo accumulation and two-sample comparisons.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::rng::{stream_rng, StreamRng};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub draws: usize,
}

impl McEstimate {
    /// `|mean - truth|` in units of standard error.
    pub fn z_score(&self, truth: f64) -> f64 {
        let d = self.mean - truth;
        if self.std_err == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d.abs() / self.std_err
        }
    }

    pub fn agrees_with(&self, truth: f64, std_errs: f64) -> bool {
        self.z_score(truth) <= std_errs
    }
}

/// Running first and second moments (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. parallel merge.
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            mean: self.mean,
            std_err: self.std_err(),
            draws: self.n,
        }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::default();
        xs.iter().for_each(|&x| m.push(x));
        m
    }
}

/// Number of independent streams a Monte-Carlo loop is split into. Fixed so
/// that results do not depend on the thread count.
pub const MC_STREAMS: usize = 64;

/// Estimate `E[f]` from `draws` evaluations of `f`, split over
/// [`MC_STREAMS`] RNG streams keyed by `(seed, stream)`. Streams run in
/// parallel and are reduced in stream order.
pub fn mc_mean<F>(draws: usize, seed: u64, f: F) -> McEstimate
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    let per = draws / MC_STREAMS;
    let extra = draws % MC_STREAMS;
    let parts: Vec<Moments> = (0..MC_STREAMS)
        .into_par_iter()
        .map(|s| {
            let count = per + usize::from(s < extra);
            let mut rng = stream_rng(seed, s as u64);
            let mut m = Moments::default();
            for _ in 0..count {
                m.push(f(&mut rng));
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total.estimate()
}

/// Two-sample z statistic for equal means.
pub fn two_sample_mean_z(a: &Moments, b: &Moments) -> f64 {
    let se = (a.variance() / a.count() as f64 + b.variance() / b.count() as f64).sqrt();
    let d = (a.mean() - b.mean()).abs();
    if se == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / se
    }
}

/// `var(a) / var(b)`.
pub fn variance_ratio(a: &Moments, b: &Moments) -> f64 {
    a.variance() / b.variance()
}

/// Empirical mean vector of a sample set.
pub fn sample_mean(samples: &[DVector<f64>]) -> DVector<f64> {
    let n = samples.first().map_or(0, |s| s.len());
    let mut acc = DVector::zeros(n);
    for s in samples {
        acc += s;
    }
    acc / samples.len() as f64
}

/// Unbiased empirical covariance.
pub fn sample_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let mean = sample_mean(samples);
    let n = mean.len();
    let mut acc = DMatrix::zeros(n, n);
    for s in samples {
        let d = s - &mean;
        acc += &d * d.transpose();
    }
    acc / (samples.len().saturating_sub(1).max(1)) as f64
}
