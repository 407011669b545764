//! Bandit policies: APE² (adaptive perturbed exploration with the p-robust
//! estimator), scaled robust UCB, and DSEE.
//!
//! Every policy starts with one pull of each arm in index order; the driver in
//! [`crate::sim`] handles that sweep and then defers to [`Policy::select`].
//! Ties go to the lowest index throughout.

use serde::{Deserialize, Serialize};

use crate::env::{argmax, nu_p_bound, BanditInstance};
use crate::error::{Error, Result};
use crate::estimators::{median_of_means, mom_block_count, truncation_level, TruncatedMeanTracker};
use crate::influence::{InfluenceParams, RobustHistory};
use crate::perturbation::PerturbationSpec;

/// Default confidence multiplier η per robust-UCB estimator.
pub const ETA_TRUNCATED: f64 = 4.0;
pub const ETA_MEDIAN_OF_MEANS: f64 = 32.0;

/// Estimator inside robust UCB.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UcbEstimator {
    #[default]
    TruncatedMean,
    MedianOfMeans,
}

/// Declarative policy description, as found in experiment configs.
///
/// Unset `p` falls back to the experiment's moment order; unset `nu_p` to the
/// largest `ν_p` bound over the instance's arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum PolicyConfig {
    Ape2 {
        c: f64,
        perturbation: PerturbationSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
    },
    RobustUcb {
        c: f64,
        #[serde(default)]
        estimator: UcbEstimator,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu_p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
    },
    Dsee {
        w: f64,
    },
}

impl PolicyConfig {
    /// Short name used in output tables, e.g. `ape2-gumbel`.
    pub fn label(&self) -> String {
        match self {
            PolicyConfig::Ape2 { perturbation, .. } => format!("ape2-{}", perturbation.family_name()),
            PolicyConfig::RobustUcb { estimator: UcbEstimator::TruncatedMean, .. } => "robust-ucb".into(),
            PolicyConfig::RobustUcb { estimator: UcbEstimator::MedianOfMeans, .. } => "robust-ucb-mom".into(),
            PolicyConfig::Dsee { .. } => "dsee".into(),
        }
    }

    /// The grid-searched hyperparameter: `c` for APE² and robust UCB, `w` for DSEE.
    pub fn tuned_param(&self) -> (&'static str, f64) {
        match *self {
            PolicyConfig::Ape2 { c, .. } | PolicyConfig::RobustUcb { c, .. } => ("c", c),
            PolicyConfig::Dsee { w } => ("w", w),
        }
    }

    pub fn with_tuned_param(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            PolicyConfig::Ape2 { c, .. } | PolicyConfig::RobustUcb { c, .. } => *c = value,
            PolicyConfig::Dsee { w } => *w = value,
        }
        out
    }

    /// Parameter checks; returns warnings for ranges outside the analysis.
    pub fn validate(&self, p: f64) -> Result<Vec<String>> {
        match *self {
            PolicyConfig::Ape2 { c, perturbation, p: own } => {
                let p = own.unwrap_or(p);
                InfluenceParams::new(p, c)?;
                perturbation.validate(Some(p))
            }
            PolicyConfig::RobustUcb { c, eta, nu_p, p: own, .. } => {
                crate::influence::compute_bp(own.unwrap_or(p))?;
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::domain("robust UCB scale c", c));
                }
                if let Some(eta) = eta {
                    if !(eta > 0.0) {
                        return Err(Error::domain("robust UCB eta", eta));
                    }
                }
                if let Some(nu) = nu_p {
                    if !(nu > 0.0) {
                        return Err(Error::domain("robust UCB nu_p", nu));
                    }
                }
                Ok(Vec::new())
            }
            PolicyConfig::Dsee { w } => {
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::domain("DSEE exploration rate w", w));
                }
                Ok(Vec::new())
            }
        }
    }

    pub fn build(&self, instance: &BanditInstance, p: f64) -> Result<Policy> {
        self.validate(p)?;
        let arms = instance.arms();
        Ok(match *self {
            PolicyConfig::Ape2 { c, perturbation, p: own } => {
                Policy::Ape2(Ape2::new(arms, InfluenceParams::new(own.unwrap_or(p), c)?, perturbation))
            }
            PolicyConfig::RobustUcb { c, estimator, eta, nu_p, p: own } => {
                let p = own.unwrap_or(p);
                let nu_p = match nu_p {
                    Some(v) => v,
                    None => instance
                        .means()
                        .iter()
                        .map(|&m| nu_p_bound(instance.noise(), m, p))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max),
                };
                if !(nu_p > 0.0) {
                    return Err(Error::InvalidParameter(
                        "robust UCB needs nu_p > 0; set it explicitly for this instance".into(),
                    ));
                }
                let eta = eta.unwrap_or(match estimator {
                    UcbEstimator::TruncatedMean => ETA_TRUNCATED,
                    UcbEstimator::MedianOfMeans => ETA_MEDIAN_OF_MEANS,
                });
                Policy::RobustUcb(RobustUcb::new(arms, p, c, eta, nu_p, estimator))
            }
            PolicyConfig::Dsee { w } => Policy::Dsee(Dsee::new(arms, w)),
        })
    }
}

/// A policy under simulation.
#[derive(Clone, Debug)]
pub enum Policy {
    Ape2(Ape2),
    RobustUcb(RobustUcb),
    Dsee(Dsee),
}

impl Policy {
    pub fn arms(&self) -> usize {
        self.counts().len()
    }

    pub fn counts(&self) -> &[u64] {
        match self {
            Policy::Ape2(s) => &s.counts,
            Policy::RobustUcb(s) => &s.counts,
            Policy::Dsee(s) => &s.counts,
        }
    }

    /// Rounds completed so far.
    pub fn rounds(&self) -> u64 {
        self.counts().iter().sum()
    }

    /// Whether this policy consumes one uniform per arm per round.
    pub fn needs_uniforms(&self) -> bool {
        matches!(self, Policy::Ape2(_))
    }

    /// Arm for the next round after the initial sweep. `uniforms` holds one
    /// value in `(0, 1)` per arm for APE² and is ignored otherwise.
    pub fn select(&mut self, uniforms: &[f64]) -> Result<usize> {
        match self {
            Policy::Ape2(s) => s.select(uniforms),
            Policy::RobustUcb(s) => s.select(),
            Policy::Dsee(s) => s.select(),
        }
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        match self {
            Policy::Ape2(s) => s.update(arm, reward),
            Policy::RobustUcb(s) => s.update(arm, reward),
            Policy::Dsee(s) => s.update(arm, reward),
        }
    }
}

fn check_arm(arm: usize, arms: usize) -> Result<()> {
    if arm < arms {
        Ok(())
    } else {
        Err(Error::ArmIndex { index: arm, arms })
    }
}

fn first_unpulled(counts: &[u64]) -> Option<usize> {
    counts.iter().position(|&n| n == 0)
}

/// APE²: `argmax_a r̂_a + β_a G_a` with `r̂_a` the p-robust estimate,
/// `β_a = c / n_a^(1−1/p)` and `G_a = F⁻¹(u_a)` drawn fresh for every arm
/// every round.
#[derive(Clone, Debug)]
pub struct Ape2 {
    params: InfluenceParams,
    perturbation: PerturbationSpec,
    histories: Vec<RobustHistory>,
    estimates: Vec<f64>,
    betas: Vec<f64>,
    counts: Vec<u64>,
}

impl Ape2 {
    pub fn new(arms: usize, params: InfluenceParams, perturbation: PerturbationSpec) -> Self {
        Self {
            params,
            perturbation,
            histories: vec![RobustHistory::new(params); arms],
            estimates: vec![0.0; arms],
            betas: vec![0.0; arms],
            counts: vec![0; arms],
        }
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn history_len(&self, arm: usize) -> usize {
        self.histories[arm].len()
    }

    pub fn select(&self, uniforms: &[f64]) -> Result<usize> {
        if let Some(a) = first_unpulled(&self.counts) {
            return Err(Error::NotInitialized(a));
        }
        if uniforms.len() != self.counts.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} uniforms, got {}",
                self.counts.len(),
                uniforms.len()
            )));
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (a, &u) in uniforms.iter().enumerate() {
            let g = self.perturbation.inverse_cdf(u)?;
            let score = self.estimates[a] + self.betas[a] * g;
            if score > best_score {
                best = a;
                best_score = score;
            }
        }
        Ok(best)
    }

    /// Records the reward and refreshes the pulled arm's estimate and β with
    /// its new count.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.counts.len())?;
        self.counts[arm] += 1;
        let hist = &mut self.histories[arm];
        hist.push(reward);
        self.estimates[arm] = hist.estimate();
        let (p, c) = (self.params.p(), self.params.c());
        self.betas[arm] = c / (self.counts[arm] as f64).powf(1.0 - 1.0 / p);
        Ok(())
    }
}

/// Robust UCB with a scaled confidence width:
/// `argmax_a r̂_a + c ν_p^(1/p) (η ln(t²) / n_a)^(1−1/p)`, where `t` is the
/// round being played and `r̂_a` uses confidence level `δ = t⁻²`.
///
/// Because `δ` moves with `t`, every arm's estimate is refreshed each round,
/// not only the pulled arm's.
#[derive(Clone, Debug)]
pub struct RobustUcb {
    p: f64,
    c: f64,
    eta: f64,
    nu_p: f64,
    estimator: UcbEstimator,
    trackers: Vec<TruncatedMeanTracker>,
    samples: Vec<Vec<f64>>,
    estimates: Vec<f64>,
    counts: Vec<u64>,
}

impl RobustUcb {
    pub fn new(arms: usize, p: f64, c: f64, eta: f64, nu_p: f64, estimator: UcbEstimator) -> Self {
        Self {
            p,
            c,
            eta,
            nu_p,
            estimator,
            trackers: vec![TruncatedMeanTracker::new(p); arms],
            samples: vec![Vec::new(); arms],
            estimates: vec![0.0; arms],
            counts: vec![0; arms],
        }
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn nu_p(&self) -> f64 {
        self.nu_p
    }

    /// Confidence width for an arm with `n` pulls at round `t`.
    pub fn width(&self, t: u64, n: u64) -> f64 {
        let t = t as f64;
        self.c * self.nu_p.powf(1.0 / self.p) * (self.eta * (t * t).ln() / n as f64).powf(1.0 - 1.0 / self.p)
    }

    pub fn select(&mut self) -> Result<usize> {
        if let Some(a) = first_unpulled(&self.counts) {
            return Err(Error::NotInitialized(a));
        }
        let t = self.counts.iter().sum::<u64>() + 1;
        let delta = 1.0 / (t as f64 * t as f64);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..self.counts.len() {
            self.estimates[a] = match self.estimator {
                UcbEstimator::TruncatedMean => self.trackers[a].estimate(truncation_level(self.nu_p, delta)),
                UcbEstimator::MedianOfMeans => median_of_means(&self.samples[a], delta),
            };
            let score = self.estimates[a] + self.width(t, self.counts[a]);
            if score > best_score {
                best = a;
                best_score = score;
            }
        }
        Ok(best)
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.counts.len())?;
        self.counts[arm] += 1;
        match self.estimator {
            UcbEstimator::TruncatedMean => self.trackers[arm].push(reward),
            UcbEstimator::MedianOfMeans => self.samples[arm].push(reward),
        }
        Ok(())
    }

    /// Block count the median-of-means estimator uses for `n` samples at round `t`.
    pub fn mom_blocks(n: usize, t: u64) -> usize {
        mom_block_count(n, 1.0 / (t as f64 * t as f64))
    }
}

/// Deterministic sequencing of exploration and exploitation: explore the
/// least-pulled arm while `min_a n_a < ⌈w ln(t+1)⌉`, otherwise play the best
/// sample mean.
#[derive(Clone, Debug)]
pub struct Dsee {
    w: f64,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl Dsee {
    pub fn new(arms: usize, w: f64) -> Self {
        Self { w, sums: vec![0.0; arms], counts: vec![0; arms] }
    }

    /// Pulls every arm must have before round `t` may exploit.
    pub fn exploration_quota(&self, t: u64) -> u64 {
        (self.w * ((t + 1) as f64).ln()).ceil() as u64
    }

    pub fn select(&self) -> Result<usize> {
        let t = self.counts.iter().sum::<u64>() + 1;
        let (least, &min_count) =
            self.counts.iter().enumerate().min_by_key(|&(i, n)| (*n, i)).expect("at least one arm");
        if min_count < self.exploration_quota(t) {
            return Ok(least);
        }
        let means: Vec<f64> = self.sums.iter().zip(&self.counts).map(|(s, &n)| s / n as f64).collect();
        Ok(argmax(&means))
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.counts.len())?;
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        Ok(())
    }
}
