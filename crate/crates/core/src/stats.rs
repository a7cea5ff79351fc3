//! Mergeable summary statistics and deterministic parallel replica execution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replicas handled sequentially by one task. Fixed so that the reduction
/// tree, and hence every floating-point sum, is independent of thread count.
pub const CHUNK: u64 = 1024;

pub trait Merge: Default + Send {
    fn merge(&mut self, other: Self);
}

/// Runs `body(replica, &mut acc)` for every replica in `0..replicas` in
/// parallel and merges per-chunk accumulators in chunk order.
pub fn par_replicas<S, F>(replicas: u64, body: F) -> S
where
    S: Merge,
    F: Fn(u64, &mut S) + Sync,
{
    let chunks = replicas.div_ceil(CHUNK);
    let parts: Vec<S> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = S::default();
            for r in c * CHUNK..((c + 1) * CHUNK).min(replicas) {
                body(r, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = S::default();
    for p in parts {
        total.merge(p);
    }
    total
}

/// Count, sum and sum of squares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl RunningStats {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            std_error: self.std_error(),
            count: self.count,
        }
    }
}

impl Merge for RunningStats {
    fn merge(&mut self, other: Self) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: u64,
}

impl Estimate {
    /// `(mean - target) / se`; zero when both the error and the deviation vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        z_score(self.mean, target, self.std_error)
    }
}

pub fn z_score(value: f64, target: f64, se: f64) -> f64 {
    let diff = value - target;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-9 * target.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Binomial z-score of an observed frequency against an exact probability.
pub fn binomial_z(successes: u64, trials: u64, p: f64) -> f64 {
    let n = trials as f64;
    z_score(successes as f64 / n, p, (p * (1.0 - p) / n).sqrt())
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

impl<T: Merge> Merge for Vec<T> {
    fn merge(&mut self, other: Self) {
        if self.is_empty() {
            *self = other;
            return;
        }
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl Merge for u64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl<K: Ord + Send, V: Merge> Merge for std::collections::BTreeMap<K, V> {
    fn merge(&mut self, other: Self) {
        for (k, v) in other {
            self.entry(k).or_default().merge(v);
        }
    }
}
