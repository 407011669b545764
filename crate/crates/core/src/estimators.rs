//! Baseline mean estimators: sample mean, truncated mean, median of means,
//! plus a dispatch to the p-robust estimator.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{p_robust_estimate, InfluenceParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    SampleMean,
    TruncatedMean,
    MedianOfMeans,
    PRobust,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::SampleMean => "sample_mean",
            EstimatorKind::TruncatedMean => "truncated_mean",
            EstimatorKind::MedianOfMeans => "median_of_means",
            EstimatorKind::PRobust => "p_robust",
        }
    }
}

/// Estimator choice with the parameters it may need.
///
/// `TruncatedMean` needs `nu_p` and `delta`, `MedianOfMeans` needs `delta`,
/// `PRobust` needs `c`. Unused fields are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub p: f64,
    #[serde(default)]
    pub nu_p: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
}

impl EstimatorSpec {
    pub fn sample_mean(p: f64) -> Self {
        Self { kind: EstimatorKind::SampleMean, p, nu_p: None, delta: None, c: None }
    }

    pub fn truncated_mean(p: f64, nu_p: f64, delta: f64) -> Self {
        Self { kind: EstimatorKind::TruncatedMean, p, nu_p: Some(nu_p), delta: Some(delta), c: None }
    }

    pub fn median_of_means(p: f64, delta: f64) -> Self {
        Self { kind: EstimatorKind::MedianOfMeans, p, nu_p: None, delta: Some(delta), c: None }
    }

    pub fn p_robust(p: f64, c: f64) -> Self {
        Self { kind: EstimatorKind::PRobust, p, nu_p: None, delta: None, c: Some(c) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p <= 2.0) {
            return Err(Error::domain("moment order p (must lie in (1, 2])", self.p));
        }
        match self.kind {
            EstimatorKind::SampleMean => Ok(()),
            EstimatorKind::TruncatedMean => {
                let nu = self.nu_p.ok_or(Error::MissingParameter("nu_p"))?;
                if !(nu > 0.0) {
                    return Err(Error::domain("nu_p", nu));
                }
                check_delta(self.delta)
            }
            EstimatorKind::MedianOfMeans => check_delta(self.delta),
            EstimatorKind::PRobust => {
                let c = self.c.ok_or(Error::MissingParameter("c"))?;
                if !(c > 0.0) {
                    return Err(Error::domain("estimator scale c", c));
                }
                Ok(())
            }
        }
    }
}

fn check_delta(delta: Option<f64>) -> Result<()> {
    let d = delta.ok_or(Error::MissingParameter("delta"))?;
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::domain("confidence level delta (must lie in (0, 1))", d));
    }
    Ok(())
}

pub fn estimate(spec: &EstimatorSpec, samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    spec.validate()?;
    Ok(match spec.kind {
        EstimatorKind::SampleMean => sample_mean(samples),
        EstimatorKind::TruncatedMean => {
            truncated_mean(samples, spec.p, spec.nu_p.unwrap_or_default(), spec.delta.unwrap_or_default())
        }
        EstimatorKind::MedianOfMeans => median_of_means(samples, spec.delta.unwrap_or_default()),
        EstimatorKind::PRobust => {
            let params = InfluenceParams::new(spec.p, spec.c.unwrap_or_default())?;
            p_robust_estimate(&params, samples, None)?
        }
    })
}

pub fn sample_mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// `(1/n) Σ_i Y_i · 1{|Y_i| ≤ (ν_p i / ln(1/δ))^(1/p)}` with 1-based `i`.
///
/// The threshold test is evaluated as `|Y_i|^p / i ≤ ν_p / ln(1/δ)`, the same
/// comparison [`TruncatedMeanTracker`] uses.
pub fn truncated_mean(samples: &[f64], p: f64, nu_p: f64, delta: f64) -> f64 {
    let limit = truncation_level(nu_p, delta);
    let kept: f64 = samples
        .iter()
        .enumerate()
        .filter(|(i, y)| truncation_key(**y, p, i + 1) <= limit)
        .map(|(_, y)| *y)
        .sum();
    kept / samples.len() as f64
}

/// `ν_p / ln(1/δ)`; infinite when `δ = 1` (nothing is truncated).
pub fn truncation_level(nu_p: f64, delta: f64) -> f64 {
    let log_inv = (1.0 / delta).ln();
    if log_inv <= 0.0 {
        f64::INFINITY
    } else {
        nu_p / log_inv
    }
}

fn truncation_key(y: f64, p: f64, index: usize) -> f64 {
    y.abs().powf(p) / index as f64
}

/// Block count `max(1, min(⌊8 ln(1/δ)⌋ + 1, ⌊n/2⌋))`.
pub fn mom_block_count(n: usize, delta: f64) -> usize {
    let by_delta = (8.0 * (1.0 / delta).ln()).floor().max(0.0) as usize + 1;
    by_delta.min(n / 2).max(1)
}

/// Median of the means of `k` contiguous, near-equal blocks; even `k` averages
/// the two middle block means.
pub fn median_of_means(samples: &[f64], delta: f64) -> f64 {
    let n = samples.len();
    let k = mom_block_count(n, delta);
    let mut means: Vec<f64> = (0..k)
        .map(|b| {
            let block = &samples[b * n / k..(b + 1) * n / k];
            sample_mean(block)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    if k % 2 == 1 {
        means[k / 2]
    } else {
        0.5 * (means[k / 2 - 1] + means[k / 2])
    }
}

#[derive(Clone, Copy, Debug)]
struct Keyed {
    key: f64,
    value: f64,
}

impl PartialEq for Keyed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Keyed {}
impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Keyed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

/// Truncated mean maintained under a truncation level that only decreases
/// over time (as with `δ = t^-2`).
///
/// Each sample enters a max-heap keyed by `|Y_i|^p / i`; once the level drops
/// below a key the sample leaves for good, so every sample is pushed and
/// popped at most once.
#[derive(Clone, Debug)]
pub struct TruncatedMeanTracker {
    p: f64,
    count: usize,
    kept: BinaryHeap<Keyed>,
    sum: f64,
    comp: f64,
    level: f64,
}

impl TruncatedMeanTracker {
    pub fn new(p: f64) -> Self {
        Self { p, count: 0, kept: BinaryHeap::new(), sum: 0.0, comp: 0.0, level: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn push(&mut self, y: f64) {
        self.count += 1;
        let key = truncation_key(y, self.p, self.count);
        if key <= self.level {
            self.kept.push(Keyed { key, value: y });
            self.add(y);
        }
    }

    /// Estimate at truncation level `ν_p / ln(1/δ)`.
    ///
    /// Panics in debug builds if the level increases between calls.
    pub fn estimate(&mut self, level: f64) -> f64 {
        debug_assert!(level <= self.level, "truncation level must not increase");
        self.level = level.min(self.level);
        while let Some(top) = self.kept.peek() {
            if top.key <= self.level {
                break;
            }
            let v = top.value;
            self.kept.pop();
            self.add(-v);
        }
        if self.count == 0 {
            0.0
        } else {
            (self.sum + self.comp) / self.count as f64
        }
    }

    // Neumaier summation
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
}
