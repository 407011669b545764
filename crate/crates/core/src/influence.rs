//! Generalized Catoni influence function and the p-robust mean estimator.
//!
//! The influence function for moment order `p ∈ (1, 2]` is
//!
//! ```text
//! ψ_p(x) =  ln(b_p |x|^p + x + 1)   for x ≥ 0
//! ψ_p(x) = −ln(b_p |x|^p − x + 1)   for x < 0
//! ```
//!
//! and the estimator built on it is
//! `Ŷ_n = c / n^(1−1/p) · Σ_k ψ_p(Y_k / (c n^(1/p)))`.
//! It needs no bound on the p-th moment, and because the argument of `ψ_p`
//! rescales with `n` the sum is recomputed from the full history whenever `n`
//! changes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moment order, its derived constant `b_p`, and the estimator scale `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceParams {
    p: f64,
    b_p: f64,
    c: f64,
}

impl InfluenceParams {
    pub fn new(p: f64, c: f64) -> Result<Self> {
        let b_p = compute_bp(p)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain("estimator scale c", c));
        }
        Ok(Self { p, b_p, c })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn b_p(&self) -> f64 {
        self.b_p
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Same moment order, different scale.
    pub fn with_scale(&self, c: f64) -> Result<Self> {
        Self::new(self.p, c)
    }
}

/// `b_p = [2 r^(1−2/p) + r^(2−2/p)]^(−p/2)` with `r = (2−p)/(p−1)`.
///
/// At `p = 2` the bracket is `0^0`-indeterminate; the limit `1/2` is returned.
pub fn compute_bp(p: f64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::domain("moment order p (must lie in (1, 2])", p));
    }
    if p == 2.0 {
        return Ok(0.5);
    }
    let r = (2.0 - p) / (p - 1.0);
    let bracket = 2.0 * r.powf(1.0 - 2.0 / p) + r.powf(2.0 - 2.0 / p);
    Ok(bracket.powf(-p / 2.0))
}

/// The influence function `ψ_p(x)`.
///
/// Both branches reduce to `sign(x) · ln(1 + |x| + b_p |x|^p)`; the logarithm
/// argument is at least one.
pub fn psi(params: &InfluenceParams, x: f64) -> f64 {
    debug_assert!(x.is_finite(), "psi called with non-finite input {x}");
    let ax = x.abs();
    let mag = (params.b_p * ax.powf(params.p) + ax + 1.0).ln();
    if x >= 0.0 {
        mag
    } else {
        -mag
    }
}

/// `Ŷ_n = c / n^(1−1/p) · Σ_k ψ_p(Y_k / (c n^(1/p)))`.
///
/// `n_override` replaces the sample count inside both the prefactor and the
/// argument scaling.
pub fn p_robust_estimate(
    params: &InfluenceParams,
    samples: &[f64],
    n_override: Option<usize>,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = n_override.unwrap_or(samples.len());
    if n == 0 {
        return Err(Error::InvalidParameter("n_override must be positive".into()));
    }
    let n = n as f64;
    let (p, c) = (params.p, params.c);
    let scale = c * n.powf(1.0 / p);
    let sum: f64 = samples.iter().map(|&y| psi(params, y / scale)).sum();
    Ok(c / n.powf(1.0 - 1.0 / p) * sum)
}

/// One-sided deviation bound `min(1, exp(−n^((p−1)/p) ε / c + b_p ν_p / c^p))`.
///
/// Uses the constant `b_p ν_p / c^p`; the sharper `b_p ν_p / (2 c^p)` from the
/// Chernoff step is not used.
pub fn tail_bound(params: &InfluenceParams, n: u64, eps: f64, nu_p: f64) -> f64 {
    let (p, c) = (params.p, params.c);
    let exponent = -(n as f64).powf((p - 1.0) / p) * eps / c + params.b_p * nu_p / c.powf(p);
    exponent.exp().min(1.0)
}

// Samples whose logarithm argument 1 + u satisfies u < SERIES_CUTOFF are folded
// into a truncated series for ln(1 + u); the first omitted term is below
// SERIES_CUTOFF^(SERIES_ORDER+1) / (SERIES_ORDER+1) relative to u.
const SERIES_CUTOFF: f64 = 0.1;
const SERIES_ORDER: usize = 16;

// Pending samples are re-scanned for absorption every MIGRATE_EVERY estimates;
// absorption only saves work, so deferring it does not change the result.
const MIGRATE_EVERY: u32 = 16;

/// Sample history for repeated p-robust estimation as the count grows.
///
/// With `s = c n^(1/p)` each sample contributes `±ln(1 + u)` where
/// `u = |y|/s + b_p |y|^p / s^p`. Since `s` only grows, a sample whose `u`
/// drops below a cutoff stays below it; such samples are absorbed into signed
/// moment sums `Σ ±|y|^j (|y|^p)^m`, from which `Σ ±ln(1 + u)` follows by a
/// truncated power series. The remaining samples are evaluated directly. The
/// result agrees with [`p_robust_estimate`] to rounding; for heavy-tailed
/// streams and moderate `c` the per-call cost stops growing with the history.
#[derive(Clone, Debug)]
pub struct RobustHistory {
    params: InfluenceParams,
    // (|y|, |y|^p) of samples not yet absorbed, split by sign
    pending: [Vec<[f64; 2]>; 2],
    // moments[k][m] = Σ ±|y|^(k−m) (|y|^p)^m over absorbed samples
    moments: Vec<Vec<f64>>,
    // raw samples, kept for the overflow fallback
    samples: Vec<f64>,
    since_migration: u32,
}

impl RobustHistory {
    pub fn new(params: InfluenceParams) -> Self {
        Self {
            params,
            pending: [Vec::new(), Vec::new()],
            moments: (0..=SERIES_ORDER).map(|k| vec![0.0; k + 1]).collect(),
            samples: Vec::new(),
            since_migration: 0,
        }
    }

    pub fn params(&self) -> &InfluenceParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn push(&mut self, y: f64) {
        let abs = y.abs();
        self.pending[(y < 0.0) as usize].push([abs, abs.powf(self.params.p)]);
        self.samples.push(y);
    }

    fn absorb(moments: &mut [Vec<f64>], sign: f64, abs: f64, abs_pow: f64) {
        // pow_a[j] = |y|^j, pow_ap[m] = |y|^(p m)
        let mut pow_a = [1.0; SERIES_ORDER + 1];
        let mut pow_ap = [1.0; SERIES_ORDER + 1];
        for i in 1..=SERIES_ORDER {
            pow_a[i] = pow_a[i - 1] * abs;
            pow_ap[i] = pow_ap[i - 1] * abs_pow;
        }
        for (k, row) in moments.iter_mut().enumerate().skip(1) {
            for (m, slot) in row.iter_mut().enumerate() {
                *slot += sign * pow_a[k - m] * pow_ap[m];
            }
        }
    }

    fn migrate(&mut self, inv_scale: f64, pow_coeff: f64) {
        for (side, sign) in [(0, 1.0), (1, -1.0)] {
            let moments = &mut self.moments;
            self.pending[side].retain(|&[a, ap]| {
                if a * inv_scale + pow_coeff * ap < SERIES_CUTOFF {
                    Self::absorb(moments, sign, a, ap);
                    false
                } else {
                    true
                }
            });
        }
    }

    /// Estimate over the whole history with `n = len()`; zero when empty.
    pub fn estimate(&mut self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let InfluenceParams { p, b_p, c } = self.params;
        let n = self.samples.len() as f64;
        let scale = c * n.powf(1.0 / p);
        let inv_scale = 1.0 / scale;
        // b_p |y/s|^p = b_p |y|^p / s^p
        let pow_coeff = b_p / scale.powf(p);

        if self.since_migration == 0 {
            self.migrate(inv_scale, pow_coeff);
        }
        self.since_migration = (self.since_migration + 1) % MIGRATE_EVERY;

        let direct = direct_log_sum(&self.pending[0], inv_scale, pow_coeff)
            - direct_log_sum(&self.pending[1], inv_scale, pow_coeff);

        // Σ ±ln(1+u) = Σ_k (−1)^(k+1)/k Σ ±u^k, u^k expanded binomially
        let mut series = 0.0;
        let mut binom = [0.0f64; SERIES_ORDER + 1];
        binom[0] = 1.0;
        let ratio = pow_coeff / inv_scale;
        for k in 1..=SERIES_ORDER {
            for m in (1..=k).rev() {
                binom[m] += binom[m - 1];
            }
            let mut term = 0.0;
            let mut factor = inv_scale.powi(k as i32);
            for (b, moment) in binom[..=k].iter().zip(&self.moments[k]) {
                term += b * factor * moment;
                factor *= ratio;
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            series += sign * term / k as f64;
        }

        let total = direct + series;
        if !total.is_finite() {
            return p_robust_estimate(&self.params, &self.samples, None).unwrap_or(f64::NAN);
        }
        c / n.powf(1.0 - 1.0 / p) * total
    }
}

/// `Σ ln(1 + |y|/s + b_p |y|^p/s^p)` as logarithms of running products: one
/// `ln` per many samples, four independent accumulators for throughput.
fn direct_log_sum(entries: &[[f64; 2]], inv_scale: f64, pow_coeff: f64) -> f64 {
    const BIG_FACTOR: f64 = 1e20;
    const FOLD_AT: f64 = 1e200;
    let mut logs = 0.0;
    let mut prods = [1.0f64; 4];
    let chunks = entries.chunks_exact(4);
    let tail = chunks.remainder();
    for chunk in chunks {
        for (prod, &[a, ap]) in prods.iter_mut().zip(chunk) {
            let factor = 1.0 + pow_coeff * ap + a * inv_scale;
            if factor > BIG_FACTOR {
                logs += factor.ln();
            } else {
                *prod *= factor;
            }
        }
        for prod in prods.iter_mut() {
            if *prod > FOLD_AT {
                logs += prod.ln();
                *prod = 1.0;
            }
        }
    }
    for &[a, ap] in tail {
        logs += (pow_coeff * ap + a * inv_scale).ln_1p();
    }
    logs + prods.iter().map(|p| p.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bp_closed_form_at_one_point_five() {
        // ratio (2−p)/(p−1) = 1, bracket = 3
        let b = compute_bp(1.5).unwrap();
        assert!((b - 3f64.powf(-0.75)).abs() < 1e-15);
    }

    #[test]
    fn bp_limit_at_two() {
        assert_eq!(compute_bp(2.0).unwrap(), 0.5);
        // the closed form approaches the limit from below p = 2
        let near = compute_bp(2.0 - 1e-9).unwrap();
        assert!((near - 0.5).abs() < 1e-6, "{near}");
    }

    #[test]
    fn bp_rejects_out_of_domain() {
        for p in [1.0, 0.5, 2.0000001, f64::NAN] {
            assert!(matches!(compute_bp(p), Err(Error::Domain { .. })), "p={p}");
        }
    }

    #[test]
    fn psi_values() {
        let params = InfluenceParams::new(1.5, 1.0).unwrap();
        assert_eq!(psi(&params, 0.0), 0.0);
        let expected = (3f64.powf(-0.75) + 2.0).ln();
        assert!((psi(&params, 1.0) - expected).abs() < 1e-15);
        assert!((expected - 0.89146).abs() < 1e-5);
        assert_eq!(psi(&params, -1.0), -psi(&params, 1.0));
    }

    #[test]
    fn estimate_reductions() {
        let params = InfluenceParams::new(1.5, 1.0).unwrap();
        assert_eq!(p_robust_estimate(&params, &[0.0, 0.0, 0.0], None).unwrap(), 0.0);
        for p in [1.1, 1.5, 2.0] {
            let params = InfluenceParams::new(p, 1.0).unwrap();
            let y = 3.7;
            let est = p_robust_estimate(&params, &[y], None).unwrap();
            assert_eq!(est, psi(&params, y));
        }
        assert!(matches!(p_robust_estimate(&params, &[], None), Err(Error::EmptySamples)));
    }

    #[test]
    fn estimate_constant_stream_converges() {
        // n copies of 1 give s ψ(1/s) with s = c n^(1/p); ψ(u) = u + b_p u^p + O(u²)
        // so the bias is about b_p n^(−(p−1)/p).
        let params = InfluenceParams::new(1.5, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in [1_000usize, 10_000, 100_000, 1_000_000] {
            let samples = vec![1.0; n];
            let est = p_robust_estimate(&params, &samples, None).unwrap();
            let s = (n as f64).powf(1.0 / 1.5);
            assert!((est - s * psi(&params, 1.0 / s)).abs() < 1e-9);
            let bias_order = params.b_p() / s.sqrt();
            assert!((est - 1.0 - bias_order).abs() < 0.2 * bias_order, "n={n}: {est}");
            assert!((est - 1.0).abs() < prev);
            prev = (est - 1.0).abs();
        }
        assert!(prev < 5e-3);
    }

    #[test]
    fn n_override_scales_both_places() {
        let params = InfluenceParams::new(1.5, 2.0).unwrap();
        let samples = [0.3, -1.2, 5.0];
        let n = 7.0_f64;
        let scale = 2.0 * n.powf(1.0 / 1.5);
        let manual: f64 =
            2.0 / n.powf(1.0 - 1.0 / 1.5) * samples.iter().map(|&y| psi(&params, y / scale)).sum::<f64>();
        let est = p_robust_estimate(&params, &samples, Some(7)).unwrap();
        assert!((est - manual).abs() < 1e-15);
    }

    #[test]
    fn tail_bound_values() {
        let params = InfluenceParams::new(2.0, 1.0).unwrap();
        assert_eq!(tail_bound(&params, 1, 0.0, 0.0), 1.0);

        let params = InfluenceParams::new(1.5, 1.0).unwrap();
        let expected = (-(100f64.powf(1.0 / 3.0)) + 3f64.powf(-0.75)).exp();
        assert!((tail_bound(&params, 100, 1.0, 1.0) - expected).abs() < 1e-15);
        assert!((expected - (-4.6416f64 + 0.4387).exp()).abs() < 1e-4);

        let mut prev = 1.0;
        for n in [10, 100, 1_000, 10_000, 100_000] {
            let b = tail_bound(&params, n, 0.5, 1.0);
            assert!(b <= prev);
            prev = b;
        }
        assert!(prev < 1e-9);
    }

    #[test]
    fn history_matches_batch_estimate() {
        let params = InfluenceParams::new(1.3, 0.7).unwrap();
        let samples: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64 - 50.0) * 0.37).collect();
        let mut hist = RobustHistory::new(params);
        assert_eq!(hist.estimate(), 0.0);
        for (i, &y) in samples.iter().enumerate() {
            hist.push(y);
            let batch = p_robust_estimate(&params, &samples[..=i], None).unwrap();
            let fast = hist.estimate();
            assert!((batch - fast).abs() <= 1e-12 * (1.0 + batch.abs()), "{i}: {batch} vs {fast}");
        }
    }

    #[test]
    fn history_matches_batch_on_heavy_tails() {
        // inverse-transform Pareto draws with a few extreme values mixed in
        for (p, c) in [(1.1, 0.05), (1.5, 1.0), (2.0, 4.0)] {
            let params = InfluenceParams::new(p, c).unwrap();
            let mut hist = RobustHistory::new(params);
            let mut samples = Vec::new();
            for i in 0..3000u32 {
                let u = ((i as f64 + 0.5) * 0.618_033_988_749_895).fract();
                let z = (1.0 - u).powf(-1.0 / (p + 0.05)) - (p + 0.05) / (p + 0.05 - 1.0);
                let y = if i % 997 == 0 { 1e6 * z.signum() } else { 1.0 + z };
                samples.push(y);
                hist.push(y);
                if i % 97 == 0 || i > 2990 {
                    let batch = p_robust_estimate(&params, &samples, None).unwrap();
                    let fast = hist.estimate();
                    assert!((batch - fast).abs() <= 1e-11 * (1.0 + batch.abs()), "p={p} i={i}: {batch} vs {fast}");
                }
            }
        }
    }
}
