//! Bandit instances: arm means plus a reward-noise model, gap-parameterized
//! instances, and the deterministic lower-bound constructions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::PerturbationSpec;

/// Additive reward noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `z − E[z]` with `z` Pareto(`alpha`, `lambda`): `P(z > x) = (lambda/x)^alpha`.
    ParetoShifted { alpha: f64, lambda: f64 },
    Noiseless,
}

impl NoiseSpec {
    pub fn pareto(alpha: f64, lambda: f64) -> Self {
        NoiseSpec::ParetoShifted { alpha, lambda }
    }

    /// Checks parameters, and `alpha > p` when a moment order is given.
    pub fn validate(&self, p: Option<f64>) -> Result<()> {
        if let NoiseSpec::ParetoShifted { alpha, lambda } = *self {
            if !(alpha > 1.0 && alpha.is_finite()) {
                return Err(Error::domain("noise alpha (must exceed 1)", alpha));
            }
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::domain("noise lambda", lambda));
            }
            if let Some(p) = p {
                if alpha <= p {
                    return Err(Error::InvalidParameter(format!(
                        "noise alpha {alpha} must exceed the moment order p = {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Zero-mean noise value for a uniform `u ∈ (0, 1)`.
    pub fn noise(&self, u: f64) -> f64 {
        match *self {
            NoiseSpec::Noiseless => 0.0,
            NoiseSpec::ParetoShifted { alpha, lambda } => {
                let z = lambda * (1.0 - u).powf(-1.0 / alpha);
                z - pareto_mean(alpha, lambda)
            }
        }
    }
}

fn pareto_mean(alpha: f64, lambda: f64) -> f64 {
    alpha * lambda / (alpha - 1.0)
}

/// `ν_p = (|y − E[z]| + α^(1/p) λ / (α − p)^(1/p))^p`, a bound on `E|y + ε|^p`.
pub fn nu_p_bound(noise: &NoiseSpec, y: f64, p: f64) -> Result<f64> {
    match *noise {
        NoiseSpec::Noiseless => Ok(y.abs().powf(p)),
        NoiseSpec::ParetoShifted { alpha, lambda } => {
            if !(alpha > p) {
                return Err(Error::domain("noise alpha (must exceed p for a finite p-th moment)", alpha));
            }
            let shift = (y - pareto_mean(alpha, lambda)).abs();
            let spread = alpha.powf(1.0 / p) * lambda / (alpha - p).powf(1.0 / p);
            Ok((shift + spread).powf(p))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    means: Vec<f64>,
    noise: NoiseSpec,
}

impl BanditInstance {
    pub fn new(means: Vec<f64>, noise: NoiseSpec) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 arms, got {}", means.len())));
        }
        if let Some(&bad) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::domain("arm mean (must lie in [0, 1])", bad));
        }
        noise.validate(None)?;
        Ok(Self { means, noise })
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Index of the largest mean, lowest index on ties.
    pub fn optimal_arm(&self) -> usize {
        argmax(&self.means)
    }

    /// `Δ_a = r_{a*} − r_a`.
    pub fn gaps(&self) -> Vec<f64> {
        let best = self.means[self.optimal_arm()];
        self.means.iter().map(|m| best - m).collect()
    }

    pub fn draw_reward(&self, arm: usize, u: f64) -> Result<f64> {
        let mean = *self.means.get(arm).ok_or(Error::ArmIndex { index: arm, arms: self.arms() })?;
        Ok(mean + self.noise.noise(u))
    }
}

/// First index of the maximum; NaN entries never win.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// `[1, 1−δ, …, 1−δ]`.
pub fn make_gap_instance(arms: usize, gap: f64, noise: NoiseSpec) -> Result<BanditInstance> {
    if arms < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 arms, got {arms}")));
    }
    if !(gap > 0.0 && gap <= 1.0) {
        return Err(Error::domain("gap (must lie in (0, 1])", gap));
    }
    let mut means = vec![1.0 - gap; arms];
    means[0] = 1.0;
    BanditInstance::new(means, noise)
}

/// Noiseless instance on which robust UCB pays `(K ln T)^(1−1/p) T^(1/p)`:
/// arm 0 has reward `Δ = ν^(1/p) (η (K−1) ln T / T)^((p−1)/p)`, the rest 0.
pub fn make_ucb_counterexample(arms: usize, horizon: u64, p: f64, nu: f64, eta: f64) -> Result<BanditInstance> {
    if arms < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 arms, got {arms}")));
    }
    crate::influence::compute_bp(p)?;
    if !(nu > 0.0) || !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("nu and eta must be positive, got {nu}, {eta}")));
    }
    let t = horizon as f64;
    let gap = ucb_counterexample_gap(arms, horizon, p, nu, eta);
    if !(gap > 0.0 && gap <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {t} too small: gap {gap} is outside (0, 1]"
        )));
    }
    let mut means = vec![0.0; arms];
    means[0] = gap;
    BanditInstance::new(means, NoiseSpec::Noiseless)
}

pub fn ucb_counterexample_gap(arms: usize, horizon: u64, p: f64, nu: f64, eta: f64) -> f64 {
    let t = horizon as f64;
    nu.powf(1.0 / p) * (eta * (arms as f64 - 1.0) * t.ln() / t).powf((p - 1.0) / p)
}

/// Largest admissible scale for [`make_ape_counterexample`]:
/// `(K−1) / (K−1 + 2^(p/(p−1)))` (exclusive).
pub fn ape_counterexample_max_scale(arms: usize, p: f64) -> f64 {
    let k1 = arms as f64 - 1.0;
    k1 / (k1 + 2f64.powf(p / (p - 1.0)))
}

/// Noiseless instance on which APE² pays `K^(1−1/p) T^(1/p) F⁻¹(1−1/K)`:
/// arm 0 has reward `Δ = ½ c^(1/p) ((K−1)/T)^(1−1/p) F⁻¹(1−1/K)`, the rest 0.
pub fn make_ape_counterexample(
    arms: usize,
    horizon: u64,
    p: f64,
    c: f64,
    spec: &PerturbationSpec,
) -> Result<BanditInstance> {
    if arms < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 arms, got {arms}")));
    }
    crate::influence::compute_bp(p)?;
    spec.validate(None)?;
    let max_c = ape_counterexample_max_scale(arms, p);
    if !(c > 0.0 && c < max_c) {
        return Err(Error::InvalidParameter(format!("scale c = {c} must lie in (0, {max_c})")));
    }
    let k1 = arms as f64 - 1.0;
    let quantile = spec.inverse_cdf(1.0 - 1.0 / arms as f64)?;
    let q = p / (p - 1.0);
    let min_horizon = c.powf(1.0 / (p - 1.0)) * k1 / 2f64.powf(q) * quantile.abs().powf(q);
    if (horizon as f64) < min_horizon {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} below the minimum {min_horizon} for this scale and perturbation"
        )));
    }
    let gap = 0.5 * c.powf(1.0 / p) * (k1 / horizon as f64).powf(1.0 - 1.0 / p) * quantile;
    if !(0.0..=1.0).contains(&gap) {
        return Err(Error::InvalidParameter(format!("gap {gap} is outside [0, 1]")));
    }
    let mut means = vec![0.0; arms];
    means[0] = gap;
    BanditInstance::new(means, NoiseSpec::Noiseless)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_reward_is_the_mean() {
        let inst = BanditInstance::new(vec![0.7, 0.2], NoiseSpec::Noiseless).unwrap();
        for u in [1e-9, 0.3, 0.999] {
            assert_eq!(inst.draw_reward(0, u).unwrap(), 0.7);
        }
        assert!(matches!(inst.draw_reward(2, 0.5), Err(Error::ArmIndex { index: 2, arms: 2 })));
    }

    #[test]
    fn pareto_noise_vanishes_at_the_mean_point() {
        let (alpha, lambda) = (1.55, 1.0);
        let noise = NoiseSpec::pareto(alpha, lambda);
        // z = E[z]  ⇔  1 − u = (E[z]/λ)^(−α)
        let u = 1.0 - (alpha / (alpha - 1.0)).powf(-alpha);
        let inst = BanditInstance::new(vec![0.4, 0.1], noise).unwrap();
        assert!((inst.draw_reward(0, u).unwrap() - 0.4).abs() < 1e-14);
    }

    #[test]
    fn nu_p_bound_values() {
        let noise = NoiseSpec::pareto(1.55, 1.0);
        let v = nu_p_bound(&noise, 1.0, 1.5).unwrap();
        let expected = ((1.0f64 - 1.55 / 0.55).abs() + (1.55f64 / 0.05).powf(2.0 / 3.0)).powf(1.5);
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 39.9).abs() < 0.1, "{v}");

        // y = E[z]: only the spread term survives
        let noise = NoiseSpec::pareto(3.0, 2.0);
        let v = nu_p_bound(&noise, 3.0, 1.5).unwrap();
        assert!((v - 3.0 * 2f64.powf(1.5) / 1.5).abs() < 1e-12);

        assert!(nu_p_bound(&NoiseSpec::pareto(1.5, 1.0), 1.0, 1.5).is_err());
    }

    #[test]
    fn gap_instances() {
        let inst = make_gap_instance(2, 0.3, NoiseSpec::Noiseless).unwrap();
        assert_eq!(inst.means(), &[1.0, 0.7]);
        let inst = make_gap_instance(5, 1.0, NoiseSpec::Noiseless).unwrap();
        assert_eq!(inst.means(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(inst.gaps(), vec![0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(inst.optimal_arm(), 0);
        assert!(make_gap_instance(1, 0.3, NoiseSpec::Noiseless).is_err());
        assert!(make_gap_instance(3, 0.0, NoiseSpec::Noiseless).is_err());
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.9, 0.9]), 1);
        assert_eq!(argmax(&[f64::NAN, 0.1]), 1);
        let inst = BanditInstance::new(vec![0.3, 0.3], NoiseSpec::Noiseless).unwrap();
        assert_eq!(inst.optimal_arm(), 0);
    }

    #[test]
    fn ucb_counterexample() {
        let inst = make_ucb_counterexample(2, 100, 2.0, 1.0, 1.0).unwrap();
        let expected = (100f64.ln() / 100.0).sqrt();
        assert!((inst.means()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.2146).abs() < 1e-4);
        assert_eq!(inst.means().iter().filter(|&&m| m != 0.0).count(), 1);
        assert_eq!(*inst.noise(), NoiseSpec::Noiseless);

        let mut prev = f64::INFINITY;
        for t in [10u64, 100, 1_000, 10_000, 100_000] {
            let g = ucb_counterexample_gap(4, t, 1.5, 1.0, 1.0);
            assert!(g < prev);
            prev = g;
        }
        // (K−1) ln T / T > 1 at T = 2
        assert!(make_ucb_counterexample(4, 2, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ape_counterexample() {
        let gumbel = PerturbationSpec::gumbel(1.0);
        let (p, c, t) = (2.0, 0.1, 1_000u64);
        let inst = make_ape_counterexample(2, t, p, c, &gumbel).unwrap();
        let q = -(2f64.ln()).ln();
        assert!((q - 0.3665).abs() < 1e-4);
        let expected = 0.5 * c.sqrt() * (1.0 / t as f64).sqrt() * q;
        assert!((inst.means()[0] - expected).abs() < 1e-15);
        assert_eq!(inst.means()[1], 0.0);

        // c beyond (K−1)/(K−1+2^(p/(p−1))) = 1/5 at K = 2, p = 2
        assert!((ape_counterexample_max_scale(2, 2.0) - 0.2).abs() < 1e-15);
        assert!(make_ape_counterexample(2, t, p, 0.2, &gumbel).is_err());
        assert!(make_ape_counterexample(2, t, p, 0.0, &gumbel).is_err());
    }
}
