//! Weight functions γ(t) and φₙ(t) and the scalar inequalities built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;

/// Absolute slack used when asserting inequality margins.
pub const MARGIN_SLACK: f64 = 1e-12;

/// A validated time value: finite and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimePoint(f64);

impl TimePoint {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t >= 0.0 {
            Ok(Self(t))
        } else {
            Err(Error::InvalidTime(t))
        }
    }

    pub const ZERO: TimePoint = TimePoint(0.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TimePoint {
    type Error = Error;
    fn try_from(t: f64) -> Result<Self> {
        Self::new(t)
    }
}

impl From<TimePoint> for f64 {
    fn from(t: TimePoint) -> f64 {
        t.0
    }
}

/// The grid of times used throughout the margin suites.
pub const T_GRID: [f64; 7] = [0.0, 0.25, 1.0, 4.0, 25.0, 100.0, 1e4];

/// γ(t) = 0.01 ln(t+1) + 0.99 t + 1.
#[inline]
pub fn gamma(t: f64) -> f64 {
    0.01 * t.ln_1p() + 0.99 * t + 1.0
}

#[inline]
pub fn gamma_prime(t: f64) -> f64 {
    0.99 + 0.01 / (t + 1.0)
}

#[inline]
pub fn gamma_second(t: f64) -> f64 {
    -0.01 / ((t + 1.0) * (t + 1.0))
}

/// The damping rate −γ″(t)/γ(t) bounding admissible coefficients.
#[inline]
pub fn damping(t: f64) -> f64 {
    -gamma_second(t) / gamma(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaValues {
    pub gamma: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn gamma_eval(t: TimePoint) -> GammaValues {
    let t = t.value();
    GammaValues { gamma: gamma(t), d1: gamma_prime(t), d2: gamma_second(t) }
}

/// φₙ(t) = exp((n−2)√t/(n+√t)) for n ≥ 2, and 1 for n ∈ {0, 1}.
#[inline]
pub fn phi(n: u32, t: f64) -> f64 {
    if n < 2 || t == 0.0 {
        return 1.0;
    }
    let r = t.sqrt();
    let nf = n as f64;
    ((nf - 2.0) * r / (nf + r)).exp()
}

pub fn phi_eval(n: u32, t: TimePoint) -> f64 {
    phi(n, t.value())
}

/// ln(a/b) − 2(a−b)/(a+b), nonnegative for a ≥ b > 0.
pub fn log_inequality_margin(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b <= 0.0 || a < b {
        return Err(Error::InvalidArgument(format!("need a >= b > 0, got a = {a}, b = {b}")));
    }
    Ok((a / b).ln() - 2.0 * (a - b) / (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl MarginReport {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, margin: rhs - lhs }
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.margin >= -slack
    }
}

/// Right-hand side of the time integral bound: min{(50/9) n² φₙ(t), 500 φₙ₋₁(t)}.
pub fn time_integral_rhs(n: u32, t: f64) -> f64 {
    let nf = n as f64;
    (50.0 / 9.0 * nf * nf * phi(n, t)).min(500.0 * phi(n - 1, t))
}

/// Integrand of the time integral bound without the (t−s)/γ(t) factor.
fn t1_min(n: u32, s: f64) -> f64 {
    let a = 2.0 * phi(n - 1, s);
    let nn = (n * (n + 1)) as f64;
    let g = gamma(s);
    a.min(phi(n + 1, s) * nn * nn / (g * g))
}

/// Points in (0, t) where the two arguments of the min cross.
fn t1_crossovers(n: u32, t: f64) -> Vec<f64> {
    let nn = (n * (n + 1)) as f64;
    let diff = |s: f64| {
        let g = gamma(s);
        2.0 * phi(n - 1, s) * g * g - phi(n + 1, s) * nn * nn
    };
    let samples = 400;
    let mut out = Vec::new();
    // log-spaced scan in 1+s, the natural clock of γ
    let lt = (1.0 + t).ln();
    let mut prev_s = 0.0;
    let mut prev = diff(0.0);
    for i in 1..=samples {
        let s = ((lt * i as f64 / samples as f64).exp() - 1.0).min(t);
        let cur = diff(s);
        if prev.signum() != cur.signum() && prev != 0.0 {
            let (mut lo, mut hi) = (prev_s, s);
            let lo_sign = prev.signum();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if diff(mid).signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev = cur;
        prev_s = s;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeIntegralReport {
    pub n: u32,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub quad_error: f64,
    pub crossovers: Vec<f64>,
}

/// The time integral bound evaluated by adaptive quadrature split at the min crossover.
pub fn time_integral_margin(n: u32, t: TimePoint, quad_tol: f64) -> Result<TimeIntegralReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("time integral bound needs n >= 1".into()));
    }
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("quad_tol must be positive, got {quad_tol}")));
    }
    let t = t.value();
    let rhs = time_integral_rhs(n, t);
    if t == 0.0 {
        return Ok(TimeIntegralReport { n, t, lhs: 0.0, rhs, margin: rhs, quad_error: 0.0, crossovers: vec![] });
    }
    let crossovers = t1_crossovers(n, t);
    let gt = gamma(t);
    // the integrand varies on the scale of 1+s, so seed panels geometrically
    let mut breaks = crossovers.clone();
    let mut p = 1.0;
    while p - 1.0 < t {
        breaks.push(p - 1.0);
        p *= 2.0;
    }
    let est = integrate_adaptive(|s| t1_min(n, s) * (t - s) / gt, 0.0, t, &breaks, quad_tol, 0.0)?;
    Ok(TimeIntegralReport {
        n,
        t,
        lhs: est.value,
        rhs,
        margin: rhs - est.value,
        quad_error: est.error,
        crossovers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_at_zero_and_one() {
        let g = gamma_eval(TimePoint::ZERO);
        assert_eq!((g.gamma, g.d1, g.d2), (1.0, 1.0, -0.01));
        let g = gamma_eval(TimePoint::new(1.0).unwrap());
        assert!((g.gamma - 1.996_931_471_805_599_5).abs() < 1e-15);
        assert!((g.d1 - 0.995).abs() < 1e-15);
        assert!((g.d2 + 0.0025).abs() < 1e-18);
    }

    #[test]
    fn gamma_derivatives_match_differences() {
        for &t in &[0.5, 3.0, 40.0] {
            let h = 1e-4;
            let d1 = (gamma(t + h) - gamma(t - h)) / (2.0 * h);
            let d2 = (gamma_prime(t + h) - gamma_prime(t - h)) / (2.0 * h);
            assert!((d1 - gamma_prime(t)).abs() < 1e-9);
            assert!((d2 - gamma_second(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_time_rejected() {
        assert!(TimePoint::new(-1e-300).is_err());
        assert!(TimePoint::new(f64::NAN).is_err());
        assert!(TimePoint::new(f64::INFINITY).is_err());
    }

    #[test]
    fn phi_examples() {
        let four = TimePoint::new(4.0).unwrap();
        assert_eq!(phi_eval(2, four), 1.0);
        assert!((phi_eval(3, four) - 0.4f64.exp()).abs() < 1e-15);
        assert!((phi_eval(4, four) - (2.0f64 / 3.0).exp()).abs() < 1e-15);
        assert_eq!(phi(0, 9.0), 1.0);
        assert_eq!(phi(1, 9.0), 1.0);
        assert_eq!(phi(7, 0.0), 1.0);
    }

    #[test]
    fn log_margin_examples() {
        assert_eq!(log_inequality_margin(1.0, 1.0).unwrap(), 0.0);
        assert!((log_inequality_margin(2.0, 1.0).unwrap() - (2f64.ln() - 2.0 / 3.0)).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((log_inequality_margin(e, 1.0).unwrap() - 0.075_765_685_479_980_53).abs() < 1e-12);
        assert!(log_inequality_margin(1.0, 2.0).is_err());
        assert!(log_inequality_margin(1.0, 0.0).is_err());
    }

    #[test]
    fn t1_anchor_values() {
        for &t in &T_GRID {
            let tp = TimePoint::new(t).unwrap();
            assert!((time_integral_margin(1, tp, 1e-8).unwrap().rhs - 50.0 / 9.0).abs() < 1e-13);
            assert!((time_integral_margin(2, tp, 1e-8).unwrap().rhs - 200.0 / 9.0).abs() < 1e-13);
        }
    }

    #[test]
    fn t1_positive_margin_example() {
        let r = time_integral_margin(5, TimePoint::new(10.0).unwrap(), 1e-8).unwrap();
        assert!(r.margin > 0.0, "{r:?}");
    }
}
