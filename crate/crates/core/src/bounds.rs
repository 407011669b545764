//! Leading-order regret rates for APE² under each perturbation family, and the
//! lower-bound rates of the robust-UCB and APE² constructions.
//!
//! Constants are suppressed: values are only meaningful as ratios across
//! `(K, T)` or parameter changes, never as absolute regret predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::{ln_zeta, PerturbationSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub p: f64,
    pub c: f64,
    pub arms: usize,
    pub horizon: f64,
    /// Gaps of the suboptimal arms, each in `(0, 1]`.
    pub gaps: Vec<f64>,
    pub spec: PerturbationSpec,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        crate::influence::compute_bp(self.p)?;
        if !(self.c > 0.0) {
            return Err(Error::domain("scale c", self.c));
        }
        if self.arms < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 arms, got {}", self.arms)));
        }
        if !(self.horizon >= self.arms as f64) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be at least the arm count {}",
                self.horizon, self.arms
            )));
        }
        if let Some(&g) = self.gaps.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::domain("gap (must lie in (0, 1])", g));
        }
        self.spec.validate(None)?;
        Ok(())
    }
}

/// A rate value plus notes about clamped terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Rate {
    pub value: f64,
    pub warnings: Vec<String>,
}

/// `Σ_a A_a · g(B_a T)` with `A_a = ((3cλ)^p / Δ_a)^(1/(p−1))`,
/// `B_a = (Δ_a / c)^(p/(p−1))` and the family-specific growth `g`:
///
/// | family | `g(x)` |
/// |---|---|
/// | Weibull | `ln(x)^(p/(k(p−1)))` |
/// | Gamma | `α^(p/(p−1)) ln(x)^(p/(p−1))` |
/// | GEV | `ln_ζ(x)^(p/(p−1))` |
/// | Pareto, Fréchet | `x^(p/(α(p−1)))` |
///
/// Terms with `B_a T ≤ 1` are clamped to zero with a warning.
pub fn gap_dependent_bound(inputs: &BoundInputs) -> Result<Rate> {
    inputs.validate()?;
    let BoundInputs { p, c, horizon, .. } = *inputs;
    let q = p / (p - 1.0);
    let lambda = inputs.spec.lambda();
    let mut value = 0.0;
    let mut warnings = Vec::new();
    for &gap in &inputs.gaps {
        let a = ((3.0 * c * lambda).powf(p) / gap).powf(1.0 / (p - 1.0));
        let x = (gap / c).powf(q) * horizon;
        if x <= 1.0 {
            warnings.push(format!("gap {gap}: B*T = {x} <= 1, term clamped to 0"));
            continue;
        }
        let growth = match inputs.spec {
            PerturbationSpec::Weibull { k, .. } => x.ln().powf(q / k),
            PerturbationSpec::Gamma { alpha, .. } => alpha.powf(q) * x.ln().powf(q),
            PerturbationSpec::Gev { zeta, .. } => ln_zeta(zeta, x).powf(q),
            PerturbationSpec::Pareto { alpha, .. } | PerturbationSpec::Frechet { alpha, .. } => {
                x.powf(q / alpha)
            }
        };
        value += a * growth;
    }
    Ok(Rate { value, warnings })
}

/// `C_{K,T} = K^(1−1/p) T^(1/p)`.
pub fn c_kt(arms: usize, horizon: f64, p: f64) -> f64 {
    (arms as f64).powf(1.0 - 1.0 / p) * horizon.powf(1.0 / p)
}

/// `C_{K,T}` times the family's K-factor:
///
/// | family | factor |
/// |---|---|
/// | Weibull | `ln(K)^(1/k)` |
/// | Gamma | `ln(α K^(1+p/(p−1)))^(p/(p−1)) / ln(K)^(1/(p−1))` |
/// | GEV | `ln_ζ(K^((2p−1)/(p−1)))^(p/(p−1)) / ln_ζ(K)^(1/(p−1))` |
/// | Pareto, Fréchet | `α^(1 + p²/(α(p−1)²)) K^(1/(α(p−1)))` |
pub fn gap_independent_bound(inputs: &BoundInputs) -> Result<f64> {
    if inputs.arms < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 arms, got {}", inputs.arms)));
    }
    let p = inputs.p;
    crate::influence::compute_bp(p)?;
    inputs.spec.validate(None)?;
    let k = inputs.arms as f64;
    let q = p / (p - 1.0);
    let factor = match inputs.spec {
        PerturbationSpec::Weibull { k: shape, .. } => k.ln().powf(1.0 / shape),
        PerturbationSpec::Gamma { alpha, .. } => {
            (alpha * k.powf(1.0 + q)).ln().powf(q) / k.ln().powf(1.0 / (p - 1.0))
        }
        PerturbationSpec::Gev { zeta, .. } => {
            ln_zeta(zeta, k.powf((2.0 * p - 1.0) / (p - 1.0))).powf(q) / ln_zeta(zeta, k).powf(1.0 / (p - 1.0))
        }
        PerturbationSpec::Pareto { alpha, .. } | PerturbationSpec::Frechet { alpha, .. } => {
            alpha.powf(1.0 + p * p / (alpha * (p - 1.0) * (p - 1.0))) * k.powf(1.0 / (alpha * (p - 1.0)))
        }
    };
    Ok(c_kt(inputs.arms, inputs.horizon, p) * factor)
}

/// Robust-UCB lower-bound rate `(K ln T)^(1−1/p) T^(1/p)`; warns for `T ≤ 10`.
pub fn ucb_lower_rate(arms: usize, horizon: f64, p: f64) -> Rate {
    let value = (arms as f64 * horizon.ln()).powf(1.0 - 1.0 / p) * horizon.powf(1.0 / p);
    let warnings = if horizon <= 10.0 {
        vec![format!("horizon {horizon} <= 10: outside the range the lower bound is stated for")]
    } else {
        Vec::new()
    };
    Rate { value, warnings }
}

/// APE² lower-bound rate `K^(1−1/p) T^(1/p) F⁻¹(1 − 1/K)`.
pub fn ape_lower_rate(arms: usize, horizon: f64, p: f64, spec: &PerturbationSpec) -> Result<f64> {
    if arms < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 arms, got {arms}")));
    }
    Ok(c_kt(arms, horizon, p) * spec.inverse_cdf(1.0 - 1.0 / arms as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn inputs(spec: PerturbationSpec, gaps: Vec<f64>) -> BoundInputs {
        BoundInputs { p: 1.5, c: 1.0, arms: 4, horizon: 1e4, gaps, spec }
    }

    #[test]
    fn gap_dependent_weibull_single_gap() {
        let inp = inputs(PerturbationSpec::exponential(1.0), vec![0.5]);
        let a = (3f64.powf(1.5) / 0.5).powf(2.0);
        let b = 0.5f64.powf(3.0);
        let expected = a * (b * 1e4).ln().powf(3.0);
        let r = gap_dependent_bound(&inp).unwrap();
        assert!((r.value - expected).abs() < 1e-9 * expected);
        assert!(r.warnings.is_empty());

        assert_eq!(gap_dependent_bound(&inputs(PerturbationSpec::exponential(1.0), vec![])).unwrap().value, 0.0);
    }

    #[test]
    fn gap_dependent_clamps_small_products() {
        let mut inp = inputs(PerturbationSpec::gumbel(1.0), vec![0.01]);
        inp.horizon = 10.0;
        let r = gap_dependent_bound(&inp).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn gap_dependent_grows_with_c() {
        let base = inputs(PerturbationSpec::exponential(1.0), vec![0.3, 0.6]);
        let doubled = BoundInputs { c: 2.0, ..base.clone() };
        let r1 = gap_dependent_bound(&base).unwrap().value;
        let r2 = gap_dependent_bound(&doubled).unwrap().value;
        assert!(r2 > r1);
        // A scales by exactly 2^(p/(p−1)); the log factor shrinks
        assert!(r2 < 2f64.powf(3.0) * r1);
    }

    #[test]
    fn gap_independent_examples() {
        let inp = BoundInputs {
            p: 2.0,
            c: 1.0,
            arms: 2,
            horizon: 2.0,
            gaps: vec![],
            spec: PerturbationSpec::exponential(1.0),
        };
        assert!((gap_independent_bound(&inp).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-14);

        let p = 1.5;
        let at = |t: f64| gap_independent_bound(&BoundInputs { p, horizon: t, ..inputs(PerturbationSpec::gumbel(1.0), vec![]) }).unwrap();
        assert!((at(2e4) / at(1e4) - 2f64.powf(1.0 / p)).abs() < 1e-12);
    }

    #[test]
    fn pareto_at_log_k_is_within_the_stated_factor() {
        let p = 1.5;
        for arms in [2usize, 8, 32, 128, 1024] {
            let ln_k = (arms as f64).ln();
            let spec = PerturbationSpec::Pareto { alpha: ln_k, lambda: ln_k };
            let inp = BoundInputs { p, c: 1.0, arms, horizon: 1e5, gaps: vec![], spec };
            let ratio = gap_independent_bound(&inp).unwrap() / (c_kt(arms, 1e5, p) * ln_k);
            // ln(K)^(p²/(ln K (p−1)²)) e^(1/(p−1)) ≤ e^(p²/(e(p−1)²)) e^(1/(p−1))
            let expected = ln_k.powf(p * p / (ln_k * (p - 1.0) * (p - 1.0))) * E.powf(1.0 / (p - 1.0));
            assert!((ratio - expected).abs() < 1e-9 * expected);
            let cap = E.powf(p * p / (E * (p - 1.0) * (p - 1.0))) * E.powf(1.0 / (p - 1.0));
            assert!(ratio <= cap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ucb_lower_rate_examples() {
        let r = ucb_lower_rate(2, E * E, 2.0);
        assert!((r.value - 2.0 * E).abs() < 1e-12);
        assert!(ucb_lower_rate(2, 10.0, 2.0).warnings.len() == 1);
        let (t, p) = (1e4, 1.5);
        let ratio = ucb_lower_rate(3, 2.0 * t, p).value / ucb_lower_rate(3, t, p).value;
        let expected = ((2.0 * t).ln() / t.ln()).powf(1.0 - 1.0 / p) * 2f64.powf(1.0 / p);
        assert!((ratio - expected).abs() < 1e-12);
    }

    #[test]
    fn ape_lower_rate_examples() {
        let g = ape_lower_rate(2, 1.0, 2.0, &PerturbationSpec::gumbel(1.0)).unwrap();
        assert!((g / 2f64.sqrt() - (-(2f64.ln()).ln())).abs() < 1e-14);

        let arms = 20;
        let ln_k = (arms as f64).ln();
        let spec = PerturbationSpec::Pareto { alpha: ln_k, lambda: ln_k };
        let r = ape_lower_rate(arms, 1e4, 1.5, &spec).unwrap();
        assert!((r / c_kt(arms, 1e4, 1.5) - E * ln_k).abs() < 1e-9);

        let mut prev = f64::NEG_INFINITY;
        for arms in 2..50 {
            let v = ape_lower_rate(arms, 1e4, 1.5, &PerturbationSpec::gumbel(1.0)).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }
}
