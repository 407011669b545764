//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol` or relative
/// tolerance `rel_tol`, whichever is looser.
///
/// Globally adaptive: the subinterval with the largest error estimate is
/// bisected until the summed error meets the tolerance or the interval budget
/// runs out.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quadrature> {
    let (v0, e0) = kronrod(&f, a, b);
    let mut intervals = vec![(a, b, v0, e0)];
    let mut evaluations = 15;
    loop {
        let value: f64 = intervals.iter().map(|iv| iv.2).sum();
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        if !value.is_finite() {
            return Err(Error::NoConvergence {
                routine: "gauss-kronrod",
                detail: format!("non-finite integral on [{a}, {b}] after {evaluations} evaluations"),
            });
        }
        let tol = abs_tol.max(rel_tol * value.abs());
        if error <= tol {
            return Ok(Quadrature { value, error, evaluations });
        }
        let (worst, &(lo, hi, _, _)) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let mid = 0.5 * (lo + hi);
        if intervals.len() >= MAX_INTERVALS || mid <= lo || mid >= hi {
            // accept within three orders of magnitude of the target
            if error <= 1e3 * tol {
                return Ok(Quadrature { value, error, evaluations });
            }
            return Err(Error::NoConvergence {
                routine: "gauss-kronrod",
                detail: format!("error estimate {error:e} exceeds tolerance {tol:e} on [{a}, {b}]"),
            });
        }
        intervals.swap_remove(worst);
        let (lv, le) = kronrod(&f, lo, mid);
        let (rv, re) = kronrod(&f, mid, hi);
        evaluations += 30;
        intervals.push((lo, mid, lv, le));
        intervals.push((mid, hi, rv, re));
    }
}

/// Outcome of integrating over a half-line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailIntegral {
    /// Integral up to the truncation point `end`.
    Converged { quadrature: Quadrature, end: f64 },
    /// The integrand was still at least the cutoff at `at`.
    Divergent { at: f64, value: f64 },
}

/// Integrate a decaying integrand over `[start, ∞)`, truncating past the last
/// scan point where `|f| ≥ cutoff`.
///
/// Scan points are `step` apart for the first 32 steps and then grow
/// geometrically, up to `start + horizon`.
pub fn integrate_tail<F: Fn(f64) -> f64>(
    f: F,
    start: f64,
    step: f64,
    horizon: f64,
    cutoff: f64,
) -> Result<TailIntegral> {
    let mut points = vec![start];
    let mut x = start;
    while x < start + horizon {
        x += step.max((x - start) / 32.0);
        points.push(x);
    }
    let mut last_big = None;
    for (i, &x) in points.iter().enumerate() {
        let v = f(x);
        if !(v.abs() < cutoff) {
            last_big = Some(i);
        }
    }
    let end_index = match last_big {
        None => 1,
        Some(i) if i + 1 >= points.len() => {
            let at = points[i];
            return Ok(TailIntegral::Divergent { at, value: f(at) });
        }
        Some(i) => i + 1,
    };
    let mut total = Quadrature { value: 0.0, error: 0.0, evaluations: 0 };
    for w in points[..=end_index].windows(2) {
        let q = integrate(&f, w[0], w[1], 1e-14, 1e-12)?;
        total.value += q.value;
        total.error += q.error;
        total.evaluations += q.evaluations;
    }
    Ok(TailIntegral::Converged { quadrature: total, end: points[end_index] })
}
