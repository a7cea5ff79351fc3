//! Finitely supported probability distributions on the integers.
//!
//! Every jump law in the model (cookies and the background law) is a
//! [`JumpDistribution`]: sorted, deduplicated atoms with probabilities that
//! sum to one, a cached mean, and a cumulative table for inversion sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum deviation of the raw probability sum from one accepted at construction.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i64, f64)>", into = "Vec<(i64, f64)>")]
pub struct JumpDistribution {
    atoms: Vec<(i64, f64)>,
    cdf: Vec<f64>,
    mean: f64,
}

impl JumpDistribution {
    /// Builds a distribution from `(offset, probability)` pairs.
    ///
    /// Duplicate offsets are merged by summing, atoms are sorted by offset and
    /// zero-probability atoms are dropped. The probabilities must sum to one
    /// within [`SUM_TOLERANCE`]; the result is renormalized so that applying
    /// this constructor to its own atoms reproduces it bit for bit.
    pub fn new(atoms: impl IntoIterator<Item = (i64, f64)>) -> Result<Self> {
        let mut raw: Vec<(i64, f64)> = atoms.into_iter().collect();
        if raw.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        for &(offset, prob) in &raw {
            if !prob.is_finite() || prob < 0.0 {
                return Err(Error::InvalidProbability { offset, prob });
            }
        }
        raw.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(i64, f64)> = Vec::with_capacity(raw.len());
        for (z, p) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == z => last.1 += p,
                _ => merged.push((z, p)),
            }
        }
        merged.retain(|&(_, p)| p > 0.0);
        if merged.is_empty() {
            return Err(Error::UnnormalizedDistribution { sum: 0.0 });
        }

        let sum = compensated_sum(merged.iter().map(|&(_, p)| p));
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::UnnormalizedDistribution { sum });
        }
        // Already-normalized input is left untouched so construction is idempotent.
        let slack = 4.0 * merged.len() as f64 * f64::EPSILON;
        if (sum - 1.0).abs() > slack {
            for atom in &mut merged {
                atom.1 /= sum;
            }
        }

        let mut cdf = Vec::with_capacity(merged.len());
        let mut acc = 0.0;
        for &(_, p) in &merged {
            acc += p;
            cdf.push(acc);
        }
        let mean = exact_mean(&merged);
        Ok(Self {
            atoms: merged,
            cdf,
            mean,
        })
    }

    pub fn point_mass(offset: i64) -> Self {
        Self {
            atoms: vec![(offset, 1.0)],
            cdf: vec![1.0],
            mean: offset as f64,
        }
    }

    /// Symmetric nearest-neighbor law `(δ₋₁ + δ₁)/2`.
    pub fn simple_symmetric() -> Self {
        Self::new([(-1, 0.5), (1, 0.5)]).expect("valid")
    }

    pub fn atoms(&self) -> &[(i64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min_offset(&self) -> i64 {
        self.atoms[0].0
    }

    pub fn max_offset(&self) -> i64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// Largest `|z|` in the support.
    pub fn max_abs_offset(&self) -> u64 {
        self.min_offset()
            .unsigned_abs()
            .max(self.max_offset().unsigned_abs())
    }

    pub fn prob(&self, offset: i64) -> f64 {
        self.atoms
            .binary_search_by_key(&offset, |&(z, _)| z)
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    /// Total mass on offsets satisfying `pred`.
    pub fn mass_where(&self, pred: impl Fn(i64) -> bool) -> f64 {
        compensated_sum(self.atoms.iter().filter(|&&(z, _)| pred(z)).map(|&(_, p)| p))
    }

    /// First absolute moment `Σ |z| p(z)`.
    pub fn abs_moment(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|&(z, p)| z.unsigned_abs() as f64 * p))
    }

    /// Draws an offset by inverting the cumulative table with one uniform.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        if self.atoms.len() == 1 {
            return self.atoms[0].0;
        }
        let u: f64 = rng.random();
        let idx = if self.cdf.len() <= 8 {
            self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1)
        } else {
            self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
        };
        self.atoms[idx].0
    }

    /// Gcd of the pairwise differences of the support offsets.
    pub fn support_span_gcd(&self) -> Result<u64> {
        span_gcd(self.atoms.iter().map(|&(z, _)| z))
    }
}

impl TryFrom<Vec<(i64, f64)>> for JumpDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<(i64, f64)>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<JumpDistribution> for Vec<(i64, f64)> {
    fn from(d: JumpDistribution) -> Self {
        d.atoms
    }
}

/// Gcd of pairwise differences of a set of offsets; equal to the gcd of the
/// differences to the smallest element.
pub fn span_gcd(offsets: impl IntoIterator<Item = i64>) -> Result<u64> {
    let mut iter = offsets.into_iter();
    let first = iter.next().ok_or(Error::EmptyDistribution)?;
    let g = iter.fold(0u64, |g, z| gcd(g, z.abs_diff(first)));
    if g == 0 {
        Err(Error::DegenerateSpan(first))
    } else {
        Ok(g)
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Neumaier-compensated summation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `Σ z p(z)` with error-free products and compensated accumulation.
fn exact_mean(atoms: &[(i64, f64)]) -> f64 {
    let terms = atoms.iter().flat_map(|&(z, p)| {
        let z = z as f64;
        let prod = z * p;
        let err = z.mul_add(p, -prod);
        [prod, err]
    });
    compensated_sum(terms)
}
