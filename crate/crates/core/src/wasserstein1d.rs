//! One-dimensional Wasserstein distances from sorted samples.
//!
//! For two equal-size empirical measures the quantile-function integral
//!
//! ```text
//! W_n = (∫_0^1 |P^{-1}(t) − Q^{-1}(t)|^n dt)^{1/n}
//! ```
//!
//! is exactly the order-statistic sum `((1/k) Σ_r |x_(r) − y_(r)|^n)^{1/n}`:
//! sorting both samples and pairing by rank is the optimal coupling in one
//! dimension. These estimators are cheap, unbiased routes to the true
//! distance and serve as independent statistical oracles for the closed-form
//! Gaussian distance and the mixture-level transport distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gmm::Gmm;

/// A sorted sample of reals, standing in for the distribution that generated
/// it via its empirical quantile function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Sorts the given samples. Rejects empty input and non-finite values.
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples {
                context: "an empirical distribution needs at least one sample".into(),
            });
        }
        for (row, value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteData {
                    row,
                    col: 0,
                    value: *value,
                });
            }
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Self { samples })
    }

    /// The samples in non-decreasing order.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Order-n Wasserstein distance between two equal-size empirical measures:
/// `((1/k) Σ_r |x_(r) − y_(r)|^n)^(1/n)` over rank-paired order statistics.
pub fn empirical_wn(
    x: &EmpiricalDistribution,
    y: &EmpiricalDistribution,
    order: u32,
) -> Result<f64> {
    if order == 0 {
        return Err(Error::InvalidArgument {
            detail: "order must be at least 1".into(),
        });
    }
    if x.len() != y.len() {
        return Err(Error::UnequalSampleCounts {
            left: x.len(),
            right: y.len(),
        });
    }
    let k = x.len() as f64;
    let mut sum = 0.0;
    for (a, b) in x.samples().iter().zip(y.samples()) {
        let gap = (a - b).abs();
        sum += match order {
            1 => gap,
            2 => gap * gap,
            n => gap.powi(n as i32),
        };
    }
    Ok((sum / k).powf(1.0 / f64::from(order)))
}

/// Draws `count` i.i.d. samples from a one-dimensional mixture and wraps
/// them as an empirical distribution. Deterministic given the seed.
pub fn sample_gmm(model: &Gmm, count: usize, seed: u64) -> Result<EmpiricalDistribution> {
    if model.dim() != 1 {
        return Err(Error::DimensionNotOne { dim: model.dim() });
    }
    if count == 0 {
        return Err(Error::EmptySamples {
            context: "sample count must be at least 1".into(),
        });
    }
    let matrix = model.sample(count, seed)?;
    EmpiricalDistribution::from_samples(matrix.column(0).iter().copied().collect())
}

/// Squared 2-Wasserstein distance between two univariate normals, evaluated
/// from the scalar formula `(m1 − m2)² + (s1 − s2)²`.
///
/// This is a second route to the same quantity the matrix-based closed form
/// computes at d = 1, touching no linear algebra, kept separate on purpose so
/// each can check the other.
pub fn gaussian_w2_squared_1d(mean1: f64, std1: f64, mean2: f64, std2: f64) -> f64 {
    let dm = mean1 - mean2;
    let ds = std1 - std2;
    dm * dm + ds * ds
}

/// Checks the rearrangement inequality behind rank pairing for one crossing
/// quadruple: with `x1 < y1` and `y2 < x2`, the non-crossing pairing
/// `|x1 − y2|^n + |y1 − x2|^n` must not exceed the crossing pairing
/// `|x1 − x2|^n + |y1 − y2|^n`. Equality can occur at n = 1 (collinear
/// configurations), so the comparison is non-strict.
pub fn check_rearrangement_inequality(
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
    order: u32,
) -> Result<bool> {
    if order == 0 {
        return Err(Error::InvalidArgument {
            detail: "order must be at least 1".into(),
        });
    }
    for value in [x1, x2, y1, y2] {
        if !value.is_finite() {
            return Err(Error::InvalidArgument {
                detail: format!("non-finite input {value}"),
            });
        }
    }
    if !(x1 < y1) {
        return Err(Error::OrderingViolated {
            detail: format!("require x1 < y1, got x1 = {x1}, y1 = {y1}"),
        });
    }
    if !(y2 < x2) {
        return Err(Error::OrderingViolated {
            detail: format!("require y2 < x2, got y2 = {y2}, x2 = {x2}"),
        });
    }
    let n = order as i32;
    let non_crossing = (x1 - y2).abs().powi(n) + (y1 - x2).abs().powi(n);
    let crossing = (x1 - x2).abs().powi(n) + (y1 - y2).abs().powi(n);
    // At n = 1 both sides are exactly equal for a whole region of quadruples
    // (both x's between the y's); the two floating-point sums then differ
    // only by evaluation order, so allow a few ULPs of slack.
    let slack = 1e-9 * crossing.max(1.0);
    Ok(non_crossing <= crossing + slack)
}

/// Bootstrap standard error of [`empirical_wn`]: both samples are resampled
/// with replacement `resamples` times and the standard deviation of the
/// re-computed statistic is returned. Deterministic given the seed.
pub fn bootstrap_se(
    x: &EmpiricalDistribution,
    y: &EmpiricalDistribution,
    order: u32,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if resamples < 2 {
        return Err(Error::InvalidArgument {
            detail: "bootstrap needs at least 2 resamples".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |source: &EmpiricalDistribution| -> Result<EmpiricalDistribution> {
        let values = (0..source.len())
            .map(|_| source.samples()[rng.random_range(0..source.len())])
            .collect();
        EmpiricalDistribution::from_samples(values)
    };
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let rx = draw(x)?;
        let ry = draw(y)?;
        stats.push(empirical_wn(&rx, &ry, order)?);
    }
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    let var = stats.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (resamples - 1) as f64;
    Ok(var.sqrt())
}
