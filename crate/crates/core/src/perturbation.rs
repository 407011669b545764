//! Perturbation distributions for randomized exploration.
//!
//! Five families with unbounded support: Weibull, Gamma, generalized extreme
//! value (GEV, with `ζ = 0` being Gumbel), Pareto and Fréchet. Each provides
//! its CDF, quantile, hazard rate and inverse-transform sampler, and
//! [`check_assumption2`] verifies the conditions the regret analysis places on
//! a perturbation: `F(0) ≤ 1/2`, log-concavity of `F`, and a finite
//! `∫₀^∞ h(x) e^{−x} / (1 − F(x)) dx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_tail, TailIntegral};
use crate::special::{gamma, gamma_pq, ln_gamma};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    Weibull { k: f64, lambda: f64 },
    Gamma { alpha: f64, lambda: f64 },
    Gev { zeta: f64, lambda: f64 },
    Pareto { alpha: f64, lambda: f64 },
    Frechet { alpha: f64, lambda: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Weibull,
    Gamma,
    Gev,
    Pareto,
    Frechet,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::Weibull,
        PerturbationKind::Gamma,
        PerturbationKind::Gev,
        PerturbationKind::Pareto,
        PerturbationKind::Frechet,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PerturbationKind::Weibull => "weibull",
            PerturbationKind::Gamma => "gamma",
            PerturbationKind::Gev => "gev",
            PerturbationKind::Pareto => "pareto",
            PerturbationKind::Frechet => "frechet",
        }
    }
}

impl PerturbationSpec {
    pub fn gumbel(lambda: f64) -> Self {
        PerturbationSpec::Gev { zeta: 0.0, lambda }
    }

    pub fn exponential(lambda: f64) -> Self {
        PerturbationSpec::Weibull { k: 1.0, lambda }
    }

    pub fn kind(&self) -> PerturbationKind {
        match self {
            PerturbationSpec::Weibull { .. } => PerturbationKind::Weibull,
            PerturbationSpec::Gamma { .. } => PerturbationKind::Gamma,
            PerturbationSpec::Gev { .. } => PerturbationKind::Gev,
            PerturbationSpec::Pareto { .. } => PerturbationKind::Pareto,
            PerturbationSpec::Frechet { .. } => PerturbationKind::Frechet,
        }
    }

    /// Scale parameter λ (shared by all families).
    pub fn lambda(&self) -> f64 {
        match *self {
            PerturbationSpec::Weibull { lambda, .. }
            | PerturbationSpec::Gamma { lambda, .. }
            | PerturbationSpec::Gev { lambda, .. }
            | PerturbationSpec::Pareto { lambda, .. }
            | PerturbationSpec::Frechet { lambda, .. } => lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut s = *self;
        match &mut s {
            PerturbationSpec::Weibull { lambda: l, .. }
            | PerturbationSpec::Gamma { lambda: l, .. }
            | PerturbationSpec::Gev { lambda: l, .. }
            | PerturbationSpec::Pareto { lambda: l, .. }
            | PerturbationSpec::Frechet { lambda: l, .. } => *l = lambda,
        }
        s
    }

    /// Family name, using `gumbel` for GEV with `ζ = 0` and `exponential` for
    /// Weibull with `k = 1` or Gamma with `α = 1`.
    pub fn family_name(&self) -> &'static str {
        match *self {
            PerturbationSpec::Gev { zeta: 0.0, .. } => "gumbel",
            PerturbationSpec::Weibull { k: 1.0, .. } => "exponential",
            PerturbationSpec::Gamma { alpha: 1.0, .. } => "exponential",
            _ => self.kind().label(),
        }
    }

    /// Short human-readable description, e.g. `gev(zeta=0,lambda=1)`.
    pub fn describe(&self) -> String {
        match *self {
            PerturbationSpec::Weibull { k, lambda } => format!("weibull(k={k},lambda={lambda})"),
            PerturbationSpec::Gamma { alpha, lambda } => format!("gamma(alpha={alpha},lambda={lambda})"),
            PerturbationSpec::Gev { zeta, lambda } => format!("gev(zeta={zeta},lambda={lambda})"),
            PerturbationSpec::Pareto { alpha, lambda } => format!("pareto(alpha={alpha},lambda={lambda})"),
            PerturbationSpec::Frechet { alpha, lambda } => format!("frechet(alpha={alpha},lambda={lambda})"),
        }
    }

    /// Checks that the distribution is well defined and returns warnings for
    /// parameters outside the ranges the regret bounds assume.
    ///
    /// The Pareto/Fréchet shape condition `α > p²/(p−1)` is only checked when
    /// a moment order is supplied.
    pub fn validate(&self, p: Option<f64>) -> Result<Vec<String>> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(name, v))
            }
        };
        let mut warnings = Vec::new();
        match *self {
            PerturbationSpec::Weibull { k, lambda } => {
                positive("weibull shape k", k)?;
                positive("weibull scale lambda", lambda)?;
                if k > 1.0 {
                    warnings.push(format!("weibull k = {k} > 1 is outside the analysed range k <= 1"));
                }
                if lambda <= 1.0 {
                    warnings.push(format!("weibull lambda = {lambda} <= 1; the integral bound needs lambda > 1"));
                }
            }
            PerturbationSpec::Gamma { alpha, lambda } => {
                positive("gamma shape alpha", alpha)?;
                positive("gamma scale lambda", lambda)?;
                if alpha < 1.0 {
                    warnings.push(format!("gamma alpha = {alpha} < 1 is outside the analysed range alpha >= 1"));
                }
                if lambda < 1.0 {
                    warnings.push(format!("gamma lambda = {lambda} < 1 is outside the analysed range lambda >= 1"));
                }
            }
            PerturbationSpec::Gev { zeta, lambda } => {
                positive("gev scale lambda", lambda)?;
                if !(zeta >= 0.0 && zeta.is_finite()) {
                    return Err(Error::domain("gev shape zeta (must be >= 0)", zeta));
                }
                if zeta >= 1.0 {
                    warnings.push(format!("gev zeta = {zeta} >= 1 is outside the analysed range [0, 1)"));
                }
                if lambda <= 1.0 {
                    warnings.push(format!("gev lambda = {lambda} <= 1; the integral bound needs lambda > 1"));
                }
            }
            PerturbationSpec::Pareto { alpha, lambda } | PerturbationSpec::Frechet { alpha, lambda } => {
                let name = self.kind().label();
                positive("shape alpha", alpha)?;
                positive("scale lambda", lambda)?;
                if lambda < alpha {
                    warnings.push(format!("{name} lambda = {lambda} < alpha = {alpha}; bounds assume lambda >= alpha"));
                }
                match p {
                    Some(p) => {
                        let min_alpha = p * p / (p - 1.0);
                        if alpha <= min_alpha {
                            warnings.push(format!(
                                "{name} alpha = {alpha} <= p^2/(p-1) = {min_alpha}; regret bound not guaranteed"
                            ));
                        }
                    }
                    None => warnings.push(format!("{name} shape condition unchecked (no moment order p given)")),
                }
            }
        }
        Ok(warnings)
    }

    /// Left end of the support.
    pub fn support_start(&self) -> f64 {
        match *self {
            PerturbationSpec::Weibull { .. } | PerturbationSpec::Gamma { .. } | PerturbationSpec::Frechet { .. } => 0.0,
            PerturbationSpec::Pareto { lambda, .. } => lambda,
            PerturbationSpec::Gev { zeta, lambda } => {
                if zeta > 0.0 {
                    -lambda / zeta
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            PerturbationSpec::Weibull { k, lambda } => {
                if x >= 0.0 {
                    -(-(x / lambda).powf(k)).exp_m1()
                } else {
                    0.0
                }
            }
            PerturbationSpec::Gamma { alpha, lambda } => {
                if x > 0.0 {
                    gamma_pq(alpha, x / lambda).map(|(p, _)| p).unwrap_or(f64::NAN)
                } else {
                    0.0
                }
            }
            PerturbationSpec::Gev { zeta, lambda } => match gev_t(zeta, lambda, x) {
                Some(t) => (-t).exp(),
                // past the upper end when ζ < 0, below the lower end when ζ > 0
                None if zeta < 0.0 => 1.0,
                None => 0.0,
            },
            PerturbationSpec::Pareto { alpha, lambda } => {
                if x >= lambda {
                    -(-alpha * (x / lambda).ln()).exp_m1()
                } else {
                    0.0
                }
            }
            PerturbationSpec::Frechet { alpha, lambda } => {
                if x > 0.0 {
                    (-(x / lambda).powf(-alpha)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `ln(1 − F(x))`, evaluated without forming `1 − F`.
    pub fn ln_survival(&self, x: f64) -> f64 {
        match *self {
            PerturbationSpec::Weibull { k, lambda } => {
                if x > 0.0 {
                    -(x / lambda).powf(k)
                } else {
                    0.0
                }
            }
            PerturbationSpec::Gamma { alpha, lambda } => {
                if x > 0.0 {
                    gamma_pq(alpha, x / lambda).map(|(_, q)| q.ln()).unwrap_or(f64::NAN)
                } else {
                    0.0
                }
            }
            PerturbationSpec::Gev { zeta, lambda } => match gev_ln_t(zeta, lambda, x) {
                Some(ln_t) => ln_one_minus_exp_neg(ln_t),
                None if zeta < 0.0 => f64::NEG_INFINITY,
                None => 0.0,
            },
            PerturbationSpec::Pareto { alpha, lambda } => {
                if x > lambda {
                    -alpha * (x / lambda).ln()
                } else {
                    0.0
                }
            }
            PerturbationSpec::Frechet { alpha, lambda } => {
                if x > 0.0 {
                    ln_one_minus_exp_neg(-alpha * (x / lambda).ln())
                } else {
                    0.0
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            PerturbationSpec::Weibull { k, lambda } => {
                if x < 0.0 || (x == 0.0 && k > 1.0) {
                    return 0.0;
                }
                let z = x / lambda;
                k / lambda * z.powf(k - 1.0) * (-z.powf(k)).exp()
            }
            PerturbationSpec::Gamma { alpha, lambda } => {
                if x < 0.0 {
                    return 0.0;
                }
                let z = x / lambda;
                ((alpha - 1.0) * z.ln() - z - ln_gamma(alpha)).exp() / lambda
            }
            PerturbationSpec::Gev { zeta, lambda } => match gev_t(zeta, lambda, x) {
                // f = t^(ζ+1) e^(−t) / λ
                Some(t) => t.powf(zeta + 1.0) * (-t).exp() / lambda,
                None => 0.0,
            },
            PerturbationSpec::Pareto { alpha, lambda } => {
                if x < lambda {
                    0.0
                } else {
                    alpha / x * (x / lambda).powf(-alpha)
                }
            }
            PerturbationSpec::Frechet { alpha, lambda } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (x / lambda).powf(-alpha);
                    alpha / x * z * (-z).exp()
                }
            }
        }
    }

    /// `ln f(x)`, accurate where `f` itself underflows; `−∞` off the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            PerturbationSpec::Gev { zeta, lambda } => match gev_ln_t(zeta, lambda, x) {
                Some(ln_t) => (zeta + 1.0) * ln_t - ln_t.exp() - lambda.ln(),
                None => f64::NEG_INFINITY,
            },
            PerturbationSpec::Frechet { alpha, lambda } if x > 0.0 => {
                let ln_z = -alpha * (x / lambda).ln();
                alpha.ln() - x.ln() + ln_z - ln_z.exp()
            }
            _ => self.pdf(x).ln(),
        }
    }

    /// Quantile function `F⁻¹(y)` for `y ∈ (0, 1)`.
    pub fn inverse_cdf(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::domain("quantile level (must lie in (0, 1))", y));
        }
        Ok(match *self {
            // ln(1/(1−y)) = −ln_1p(−y)
            PerturbationSpec::Weibull { k, lambda } => lambda * (-(-y).ln_1p()).powf(1.0 / k),
            PerturbationSpec::Gamma { alpha, lambda } => gamma_quantile(alpha, lambda, y)?,
            PerturbationSpec::Gev { zeta, lambda } => {
                let l = -y.ln();
                if zeta == 0.0 {
                    -lambda * l.ln()
                } else {
                    lambda * (l.powf(-zeta) - 1.0) / zeta
                }
            }
            PerturbationSpec::Pareto { alpha, lambda } => lambda * (-(-y).ln_1p() / alpha).exp(),
            PerturbationSpec::Frechet { alpha, lambda } => lambda * (-y.ln()).powf(-1.0 / alpha),
        })
    }

    /// Inverse-transform draw for a uniform variate `u ∈ (0, 1)`.
    pub fn sample(&self, u: f64) -> Result<f64> {
        self.inverse_cdf(u)
    }

    /// Hazard rate `f(x) / (1 − F(x))`.
    pub fn hazard(&self, x: f64) -> Result<f64> {
        let start = self.support_start();
        let inside = match self {
            // the Weibull and Gamma hazards extend continuously to the origin
            PerturbationSpec::Weibull { .. } | PerturbationSpec::Gamma { .. } => x >= start,
            PerturbationSpec::Pareto { .. } => x >= start,
            _ => x > start,
        };
        let ln_s = self.ln_survival(x);
        if !inside || !x.is_finite() || ln_s == f64::NEG_INFINITY || ln_s.is_nan() {
            return Err(Error::domain("hazard argument outside the support", x));
        }
        Ok(match *self {
            PerturbationSpec::Weibull { k, lambda } => {
                if x == 0.0 && k < 1.0 {
                    return Err(Error::domain("weibull hazard at 0 with k < 1 (unbounded)", x));
                }
                k / lambda * (x / lambda).powf(k - 1.0)
            }
            PerturbationSpec::Pareto { alpha, .. } => alpha / x,
            _ => {
                let f = self.pdf(x);
                if f == 0.0 {
                    0.0
                } else {
                    (f.ln() - ln_s).exp()
                }
            }
        })
    }
}

// t(x) = (1 + ζ x/λ)^(−1/ζ), or e^(−x/λ) when ζ = 0; None outside the support
fn gev_ln_t(zeta: f64, lambda: f64, x: f64) -> Option<f64> {
    if zeta == 0.0 {
        Some(-x / lambda)
    } else {
        let base = 1.0 + zeta * x / lambda;
        (base > 0.0).then(|| -base.ln() / zeta)
    }
}

// ln(1 − e^(−t)) given ln t, without underflow for tiny t
fn ln_one_minus_exp_neg(ln_t: f64) -> f64 {
    let t = ln_t.exp();
    if t < 1e-8 {
        ln_t - 0.5 * t
    } else {
        (-(-t).exp_m1()).ln()
    }
}

fn gev_t(zeta: f64, lambda: f64, x: f64) -> Option<f64> {
    if zeta == 0.0 {
        Some((-x / lambda).exp())
    } else {
        let base = 1.0 + zeta * x / lambda;
        (base > 0.0).then(|| base.powf(-1.0 / zeta))
    }
}

/// Gamma quantile by bisection on the regularized lower incomplete gamma,
/// starting from `[0, λ(α + 10√α + 10)]` and stopping at `|F(x) − y| ≤ 1e−12`.
fn gamma_quantile(alpha: f64, lambda: f64, y: f64) -> Result<f64> {
    let cdf = |x: f64| gamma_pq(alpha, x / lambda).map(|(p, _)| p);
    let mut lo = 0.0;
    let mut hi = lambda * (alpha + 10.0 * alpha.sqrt() + 10.0);
    // extend the bracket for extreme upper quantiles
    let mut guard = 0;
    while cdf(hi)? < y {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NoConvergence {
                routine: "gamma quantile bracket",
                detail: format!("alpha={alpha}, lambda={lambda}, y={y}"),
            });
        }
    }
    let mut best = (f64::INFINITY, 0.5 * (lo + hi));
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let fm = cdf(mid)?;
        let err = (fm - y).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err <= 1e-12 || mid <= lo || mid >= hi {
            break;
        }
        if fm < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

/// `ln_ζ(x) = (x^ζ − 1)/ζ`, with the natural log at `ζ = 0`.
pub fn ln_zeta(zeta: f64, x: f64) -> f64 {
    if zeta == 0.0 {
        x.ln()
    } else {
        (x.powf(zeta) - 1.0) / zeta
    }
}

/// Result of checking a perturbation against the analysis assumptions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assumption2Report {
    pub f_zero: f64,
    pub f_zero_ok: bool,
    pub log_concave_ok: bool,
    /// Largest second difference of `ln F` found on the grid.
    pub max_second_difference: f64,
    /// Numeric value of `∫₀^∞ h(x) e^{−x} / (1 − F(x)) dx`.
    pub integral_c: f64,
    /// Closed-form upper bound for the integral, when the family has one.
    pub integral_bound: Option<f64>,
    pub integral_ok: bool,
    /// Largest hazard rate seen on the log-concavity grid.
    pub sup_hazard: f64,
    /// Point where the tail integral was truncated (or where divergence was
    /// detected, with `integral_c` infinite).
    pub truncated_at: f64,
}

impl Assumption2Report {
    pub fn all_ok(&self) -> bool {
        self.f_zero_ok && self.log_concave_ok && self.integral_ok
    }
}

const CONCAVITY_GRID: usize = 10_000;
const CONCAVITY_TOL: f64 = 1e-8;
const INTEGRAND_CUTOFF: f64 = 1e-12;

/// Closed-form bound on the hazard integral where the family has one.
pub fn integral_bound(spec: &PerturbationSpec) -> Option<f64> {
    match *spec {
        PerturbationSpec::Weibull { k, lambda } if lambda > 1.0 => Some(gamma(k + 1.0) * (lambda - 1.0).powf(-k)),
        PerturbationSpec::Gamma { alpha, lambda } if lambda > 1.0 => Some((lambda - 1.0).powf(-alpha)),
        PerturbationSpec::Gev { lambda, .. } if lambda > 1.0 => Some(2.0 / (lambda - 1.0)),
        PerturbationSpec::Pareto { alpha, lambda } => Some(gamma(alpha + 1.0) / lambda.powf(alpha)),
        PerturbationSpec::Frechet { .. } => Some(4.0),
        _ => None,
    }
}

pub fn check_assumption2(spec: &PerturbationSpec) -> Result<Assumption2Report> {
    spec.validate(None)?;
    let f_zero = spec.cdf(0.0);

    // log-concavity: second differences of ln F on a uniform grid
    let lo = spec.inverse_cdf(1e-4)?;
    let hi = spec.inverse_cdf(1.0 - 1e-4)?;
    let step = (hi - lo) / (CONCAVITY_GRID - 1) as f64;
    let ln_f: Vec<f64> = (0..CONCAVITY_GRID).map(|i| spec.cdf(lo + i as f64 * step).ln()).collect();
    let max_second_difference = ln_f
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let sup_hazard = (0..CONCAVITY_GRID)
        .filter_map(|i| spec.hazard(lo + i as f64 * step).ok())
        .fold(0.0, f64::max);

    // ∫ h(x) e^{−x} / S(x) dx = ∫ f(x) exp(−x − 2 ln S(x)) dx
    let start = spec.support_start().max(0.0);
    let integrand = |x: f64| {
        let ln_f = spec.ln_pdf(x);
        if ln_f == f64::NEG_INFINITY {
            0.0
        } else {
            (ln_f - x - 2.0 * spec.ln_survival(x)).exp()
        }
    };
    let step = 0.25 * spec.lambda().clamp(0.1, 4.0);
    let (integral_c, truncated_at) = match integrate_tail(integrand, start, step, 1e7, INTEGRAND_CUTOFF)? {
        TailIntegral::Converged { quadrature, end } => (quadrature.value.max(0.0), end),
        TailIntegral::Divergent { at, .. } => (f64::INFINITY, at),
    };
    let bound = integral_bound(spec);
    let integral_ok = match bound {
        Some(b) => integral_c <= b * (1.0 + 1e-3),
        None => integral_c.is_finite(),
    } && integral_c.is_finite();
    Ok(Assumption2Report {
        f_zero,
        f_zero_ok: f_zero <= 0.5,
        log_concave_ok: max_second_difference <= CONCAVITY_TOL,
        max_second_difference,
        integral_c,
        integral_bound: bound,
        integral_ok,
        sup_hazard,
        truncated_at,
    })
}

/// Parameters minimizing the gap-independent bound for `arms` arms, with any
/// warnings about the analysed parameter ranges.
///
/// Pareto and Fréchet use `α = λ = ln K`, which only satisfies
/// `α > p²/(p−1)` once `K > exp(p²/(p−1))`; that is reported as a warning.
pub fn optimal_params(kind: PerturbationKind, arms: usize, p: Option<f64>) -> Result<(PerturbationSpec, Vec<String>)> {
    if arms < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 arms, got {arms}")));
    }
    let ln_k = (arms as f64).ln();
    let spec = match kind {
        PerturbationKind::Weibull => PerturbationSpec::Weibull { k: 1.0, lambda: 1.0 },
        PerturbationKind::Gamma => PerturbationSpec::Gamma { alpha: 1.0, lambda: 1.0 },
        PerturbationKind::Gev => PerturbationSpec::Gev { zeta: 0.0, lambda: 1.0 },
        PerturbationKind::Pareto => PerturbationSpec::Pareto { alpha: ln_k, lambda: ln_k },
        PerturbationKind::Frechet => PerturbationSpec::Frechet { alpha: ln_k, lambda: ln_k },
    };
    let mut warnings = spec.validate(p)?;
    if let (Some(p), PerturbationKind::Pareto | PerturbationKind::Frechet) = (p, kind) {
        let needed = (p * p / (p - 1.0)).exp();
        if (arms as f64) <= needed {
            warnings.push(format!("K = {arms} <= exp(p^2/(p-1)) = {needed:.1}; alpha = ln K is not the optimum here"));
        }
    }
    Ok((spec, warnings))
}
