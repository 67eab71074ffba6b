//! Comparison engine for y″ = h(s)y (+F) with |h| ≤ −γ″/γ.
//!
//! Everything is built from one initial-value solve of y₁″ = hy₁,
//! y₁(0) = y₁′(0) = 1, carried together with I(s) = ∫₀ˢ y₁⁻² and
//! G(s) = ∫₀ˢ γ⁻². Then y₂ = y₁(I(t) − I) and the forced solution is
//! y = −y₂P − y₁(R(t) − R) with P = ∫₀ˢ Fy₁, R = ∫₀ˢ Fy₂.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{integrate, DenseSolution, Options};
use crate::quadrature::integrate_adaptive;
use crate::weights::{damping, gamma};

pub const ODE_RTOL: f64 = 1e-14;
pub const ODE_ATOL: f64 = 1e-18;

fn ode_options() -> Options {
    Options::adaptive(ODE_RTOL, ODE_ATOL)
}

/// Offset from s = t at which |y(s)|/(t−s) is read off the dense output.
pub const ENDPOINT_OFFSET: f64 = 1e-6;

/// Samples per unit of ln(1+t) used by the admissibility certificate.
const CERTIFY_SAMPLES: usize = 2000;

type Rule = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A coefficient h(s) together with its sampled admissibility ratio.
#[derive(Clone)]
pub struct CoefficientPath {
    rule: Rule,
    label: String,
}

impl std::fmt::Debug for CoefficientPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientPath").field("label", &self.label).finish()
    }
}

impl CoefficientPath {
    pub fn new(label: impl Into<String>, rule: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { rule: Arc::new(rule), label: label.into() }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    /// h = sign·(−γ″/γ), the extreme admissible coefficients.
    pub fn extreme(sign: f64) -> Self {
        let sign = sign.signum();
        Self::new(if sign > 0.0 { "+damping" } else { "-damping" }, move |s| sign * damping(s))
    }

    /// h = θ(s)·(−γ″/γ) with θ a random smooth path in [−1, 1].
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let modes = rng.gen_range(1..=6);
        let mut terms = Vec::with_capacity(modes);
        let mut norm = 0.0;
        for _ in 0..modes {
            let amp: f64 = rng.gen_range(-1.0..1.0);
            let freq: f64 = rng.gen_range(0.0..4.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            norm += amp.abs();
            terms.push((amp, freq, phase));
        }
        let scale = rng.gen_range(0.5..1.0) / norm.max(f64::MIN_POSITIVE);
        Self::new("random", move |s: f64| {
            let u = s.ln_1p();
            let theta: f64 = terms.iter().map(|&(a, w, p)| a * (w * u + p).cos()).sum();
            scale * theta * damping(s)
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        (self.rule)(s)
    }

    /// max |h(s)|γ(s)/(−γ″(s)) over a sample grid of [0, t], uniform in ln(1+s).
    pub fn admissibility_ratio(&self, t: f64) -> f64 {
        let lt = t.ln_1p();
        let m = CERTIFY_SAMPLES.max((CERTIFY_SAMPLES as f64 * lt) as usize);
        (0..=m)
            .map(|i| {
                let s = ((lt * i as f64 / m as f64).exp() - 1.0).min(t);
                self.eval(s).abs() / damping(s)
            })
            .fold(0.0, f64::max)
    }

    pub fn certify(&self, t: f64) -> Result<f64> {
        let ratio = self.admissibility_ratio(t);
        if ratio > 1.0 + 1e-12 {
            let lt = t.ln_1p();
            let worst = (0..=CERTIFY_SAMPLES)
                .map(|i| ((lt * i as f64 / CERTIFY_SAMPLES as f64).exp() - 1.0).min(t))
                .max_by(|a, b| {
                    (self.eval(*a).abs() / damping(*a)).total_cmp(&(self.eval(*b).abs() / damping(*b)))
                })
                .unwrap_or(0.0);
            return Err(Error::InadmissibleCoefficient { s: worst, ratio });
        }
        Ok(ratio)
    }
}

/// A random bounded forcing Σ bₖ cos(νₖ s + ψₖ) with Σ|bₖ| ≤ 1.
pub fn random_forcing<R: Rng>(rng: &mut R, t: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone {
    let modes = rng.gen_range(1..=5);
    let mut terms = Vec::with_capacity(modes);
    let mut norm = 0.0;
    for _ in 0..modes {
        let b: f64 = rng.gen_range(-1.0..1.0);
        let nu: f64 = rng.gen_range(0.0..12.0) / t.max(1e-3).min(10.0);
        let psi: f64 = rng.gen_range(0.0..2.0 * PI);
        norm += b.abs();
        terms.push((b, nu, psi));
    }
    let scale = 1.0 / norm.max(f64::MIN_POSITIVE);
    move |s: f64| scale * terms.iter().map(|&(b, nu, psi)| b * (nu * s + psi).cos()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Profile {
    Y1,
    Y2,
    Forced,
}

/// y₁ with y₁(0) = y₁′(0) = 1, I = ∫y₁⁻², G = ∫γ⁻², on [0, t].
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    t: f64,
    dense: DenseSolution<4>,
    end: [f64; 4],
    pub admissibility: f64,
}

impl FundamentalSystem {
    pub fn new(h: &CoefficientPath, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidTime(t));
        }
        let admissibility = h.certify(t)?;
        Self::from_rule(|s| h.eval(s), t, admissibility, &ode_options(), &[])
    }

    /// Solve with an arbitrary coefficient rule; `breaks` are kinks of h.
    pub fn from_rule(
        h: impl Fn(f64) -> f64,
        t: f64,
        admissibility: f64,
        opts: &Options,
        breaks: &[f64],
    ) -> Result<Self> {
        let mut b = vec![0.0];
        b.extend(breaks.iter().copied().filter(|&s| s > 0.0 && s < t));
        b.push(t);
        b.dedup();
        let rhs = |s: f64, y: &[f64; 4]| -> Result<[f64; 4]> {
            if !(y[0] > 0.0) {
                return Err(Error::Integration(format!("y1 lost positivity at s = {s}")));
            }
            let g = gamma(s);
            Ok([y[1], h(s) * y[0], 1.0 / (y[0] * y[0]), 1.0 / (g * g)])
        };
        let (end, dense) = integrate(rhs, &b, [1.0, 1.0, 0.0, 0.0], opts)?;
        let dense = dense.ok_or_else(|| Error::Integration("dense output missing".into()))?;
        Ok(Self { t, dense, end, admissibility })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dense_nodes(&self) -> Vec<f64> {
        self.dense.nodes()
    }

    fn state(&self, s: f64) -> [f64; 4] {
        if s >= self.t {
            self.end
        } else {
            self.dense.eval(s)
        }
    }

    /// (y₁, y₁′) at s.
    pub fn y1(&self, s: f64) -> (f64, f64) {
        let st = self.state(s);
        (st[0], st[1])
    }

    /// (y₂, y₂′) at s.
    pub fn y2(&self, s: f64) -> (f64, f64) {
        let st = self.state(s);
        let d = self.end[2] - st[2];
        (st[0] * d, st[1] * d - 1.0 / st[0])
    }

    /// ỹγ(s) = γ(s)∫ₛᵗ γ⁻².
    pub fn y_gamma(&self, s: f64) -> f64 {
        gamma(s) * (self.end[3] - self.state(s)[3])
    }

    /// K(s, τ) = y₁(min)·y₂(max).
    pub fn kernel(&self, s: f64, tau: f64) -> Result<f64> {
        for v in [s, tau] {
            if !(0.0..=self.t).contains(&v) {
                return Err(Error::InvalidArgument(format!("kernel argument {v} outside [0, {}]", self.t)));
            }
        }
        let (lo, hi) = if tau <= s { (tau, s) } else { (s, tau) };
        Ok(self.y1(lo).0 * self.y2(hi).0)
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Scaled(f64),
    Y2,
    Forced { p: DenseSolution<2>, p_end: [f64; 2] },
}

/// One of the profiles y₁ (scaled), y₂, or the forced solution.
#[derive(Debug, Clone)]
pub struct LinearBvpSolution {
    pub profile: Profile,
    pub nodes: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    base: Arc<FundamentalSystem>,
    repr: Repr,
}

impl LinearBvpSolution {
    fn build(profile: Profile, base: Arc<FundamentalSystem>, repr: Repr) -> Self {
        let mut sol = Self { profile, nodes: base.dense_nodes(), y: vec![], dy: vec![], base, repr };
        let (y, dy): (Vec<f64>, Vec<f64>) = sol.nodes.iter().map(|&s| sol.eval(s)).unzip();
        sol.y = y;
        sol.dy = dy;
        sol
    }

    pub fn t(&self) -> f64 {
        self.base.t
    }

    pub fn system(&self) -> &FundamentalSystem {
        &self.base
    }

    /// (y, y′) at s ∈ [0, t].
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match &self.repr {
            Repr::Scaled(c) => {
                let (a, b) = self.base.y1(s);
                (c * a, c * b)
            }
            Repr::Y2 => self.base.y2(s),
            Repr::Forced { p, p_end } => {
                let st = if s >= self.base.t { *p_end } else { p.eval(s) };
                let rest = p_end[1] - st[1];
                let (y1, dy1) = self.base.y1(s);
                let (y2, dy2) = self.base.y2(s);
                (-y2 * st[0] - y1 * rest, -dy2 * st[0] - dy1 * rest)
            }
        }
    }

    /// Residuals of the profile's boundary conditions.
    pub fn boundary_residuals(&self) -> (f64, f64) {
        let (y0, dy0) = self.eval(0.0);
        let (yt, _) = self.eval(self.t());
        match self.profile {
            Profile::Y1 => ((y0 - dy0).abs(), 0.0),
            Profile::Y2 => ((y0 - dy0 - 1.0).abs(), yt.abs()),
            Profile::Forced => ((y0 - dy0).abs(), yt.abs()),
        }
    }
}

/// c·y₁ on an existing fundamental system.
pub fn y1_on(base: Arc<FundamentalSystem>, c: f64) -> LinearBvpSolution {
    LinearBvpSolution::build(Profile::Y1, base, Repr::Scaled(c))
}

/// y₂ on an existing fundamental system.
pub fn y2_on(base: Arc<FundamentalSystem>) -> LinearBvpSolution {
    LinearBvpSolution::build(Profile::Y2, base, Repr::Y2)
}

pub fn solve_y1(h: &CoefficientPath, t: f64, c: f64) -> Result<LinearBvpSolution> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("initial value must be positive, got {c}")));
    }
    let base = Arc::new(FundamentalSystem::new(h, t)?);
    Ok(LinearBvpSolution::build(Profile::Y1, base, Repr::Scaled(c)))
}

pub fn solve_y2(h: &CoefficientPath, t: f64) -> Result<LinearBvpSolution> {
    let base = Arc::new(FundamentalSystem::new(h, t)?);
    Ok(LinearBvpSolution::build(Profile::Y2, base, Repr::Y2))
}

pub fn solve_forced(
    h: &CoefficientPath,
    forcing: impl Fn(f64) -> f64,
    t: f64,
) -> Result<LinearBvpSolution> {
    let base = Arc::new(FundamentalSystem::new(h, t)?);
    forced_on(base, forcing, &ode_options(), &[])
}

/// Forced solution on an existing fundamental system.
pub fn forced_on(
    base: Arc<FundamentalSystem>,
    forcing: impl Fn(f64) -> f64,
    opts: &Options,
    breaks: &[f64],
) -> Result<LinearBvpSolution> {
    let t = base.t;
    let mut b = vec![0.0];
    b.extend(breaks.iter().copied().filter(|&s| s > 0.0 && s < t));
    b.push(t);
    b.dedup();
    let rhs = |s: f64, _: &[f64; 2]| -> Result<[f64; 2]> {
        let f = forcing(s);
        Ok([f * base.y1(s).0, f * base.y2(s).0])
    };
    let (p_end, dense) = integrate(rhs, &b, [0.0, 0.0], opts)?;
    let p = dense.ok_or_else(|| Error::Integration("dense output missing".into()))?;
    Ok(LinearBvpSolution::build(Profile::Forced, base.clone(), Repr::Forced { p, p_end }))
}

/// min{γ(s)(t−τ), γ(τ)(t−s)}/γ(t) − |K(s, τ)|.
pub fn kernel_bound_margin(sys: &FundamentalSystem, s: f64, tau: f64) -> Result<f64> {
    let t = sys.t;
    let k = sys.kernel(s, tau)?;
    Ok((gamma(s) * (t - tau)).min(gamma(tau) * (t - s)) / gamma(t) - k.abs())
}

/// Sample points: the integrator's nodes plus a uniform grid in ln(1+s).
pub fn sample_points(sys: &FundamentalSystem, extra: usize) -> Vec<f64> {
    let t = sys.t;
    let lt = t.ln_1p();
    let mut pts = sys.dense_nodes();
    pts.extend((0..=extra).map(|i| ((lt * i as f64 / extra as f64).exp() - 1.0).clamp(0.0, t)));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForcedMargins {
    /// ∫|F|(t−s)/γ(t) − sup |y|/γ.
    pub gamma_weighted: f64,
    /// ∫|F|γ(s)/γ(t) − sup |y|/(t−s).
    pub distance_weighted: f64,
}

pub fn forced_margins(sol: &LinearBvpSolution, forcing: impl Fn(f64) -> f64, pts: &[f64]) -> Result<ForcedMargins> {
    let t = sol.t();
    let gt = gamma(t);
    let breaks: Vec<f64> = pts.to_vec();
    let r1 = integrate_adaptive(|s| forcing(s).abs() * (t - s) / gt, 0.0, t, &breaks, 1e-12, 1e-15)?.value;
    let r2 = integrate_adaptive(|s| forcing(s).abs() * gamma(s) / gt, 0.0, t, &breaks, 1e-12, 1e-15)?.value;
    let mut sup1: f64 = 0.0;
    let mut sup2: f64 = 0.0;
    let delta = ENDPOINT_OFFSET.min(0.5 * t);
    for &s in pts {
        let y = sol.eval(s).0;
        sup1 = sup1.max(y.abs() / gamma(s));
        let s2 = s.min(t - delta);
        sup2 = sup2.max(sol.eval(s2).0.abs() / (t - s2));
    }
    Ok(ForcedMargins { gamma_weighted: r1 - sup1, distance_weighted: r2 - sup2 })
}

/// Margins of one coefficient path at one final time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub label: String,
    pub t: f64,
    pub admissibility: f64,
    /// min over samples of y₁ (positivity).
    pub y1_min: f64,
    /// min of γ(s)y₁(t)/γ(t) − y₁(s).
    pub y1_bound: f64,
    /// min of the increments of y₁/γ between consecutive samples.
    pub y1_ratio_increment: f64,
    /// min of y₂.
    pub y2_min: f64,
    /// min of (t−s)/γ(t) − y₂(s).
    pub y2_bound: f64,
    /// min of −(increments of y₂/ỹγ) before t.
    pub y2_ratio_decrement: f64,
    /// min of γỹγ − y₁y₂.
    pub product_bound: f64,
    /// min of (t−s)/γ(t) − ỹγ(s).
    pub y_gamma_bound: f64,
    /// max |Wronskian + 1|.
    pub wronskian_error: f64,
    /// worst boundary residual of y₂.
    pub y2_residual: f64,
    /// min kernel margin over a product grid.
    pub kernel: f64,
    /// max |K(s,τ) − K(τ,s)|.
    pub kernel_asymmetry: f64,
    /// min forced-solution margins over the supplied forcings.
    pub forced_gamma: f64,
    pub forced_distance: f64,
    pub forced_residual: f64,
}

impl ComparisonReport {
    /// The smallest margin, to be compared against −slack.
    pub fn min_margin(&self) -> f64 {
        [
            self.y1_min,
            self.y1_bound,
            self.y1_ratio_increment,
            self.y2_min,
            self.y2_bound,
            self.y2_ratio_decrement,
            self.product_bound,
            self.y_gamma_bound,
            self.kernel,
            self.forced_gamma,
            self.forced_distance,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.min_margin() >= -slack && self.wronskian_error <= slack.max(1e-8) && self.y2_residual <= 1e-9
    }
}

/// Certifies (i), (ii), (iii) and the kernel bound for one path.
pub fn comparison_margins<F>(h: &CoefficientPath, t: f64, forcings: &[F]) -> Result<ComparisonReport>
where
    F: Fn(f64) -> f64,
{
    let sys = Arc::new(FundamentalSystem::new(h, t)?);
    let pts = sample_points(&sys, 400);
    let gt = gamma(t);
    let (y1t, _) = sys.y1(t);
    let mut r = ComparisonReport {
        label: h.label().to_string(),
        t,
        admissibility: sys.admissibility,
        y1_min: f64::INFINITY,
        y1_bound: f64::INFINITY,
        y1_ratio_increment: f64::INFINITY,
        y2_min: f64::INFINITY,
        y2_bound: f64::INFINITY,
        y2_ratio_decrement: f64::INFINITY,
        product_bound: f64::INFINITY,
        y_gamma_bound: f64::INFINITY,
        wronskian_error: 0.0,
        y2_residual: 0.0,
        kernel: f64::INFINITY,
        kernel_asymmetry: 0.0,
        forced_gamma: f64::INFINITY,
        forced_distance: f64::INFINITY,
        forced_residual: 0.0,
    };
    let mut prev_ratio1: Option<f64> = None;
    let mut prev_ratio2: Option<f64> = None;
    for &s in &pts {
        let (y1, dy1) = sys.y1(s);
        let (y2, dy2) = sys.y2(s);
        let yg = sys.y_gamma(s);
        let g = gamma(s);
        r.y1_min = r.y1_min.min(y1);
        r.y1_bound = r.y1_bound.min(g * y1t / gt - y1);
        let ratio1 = y1 / g;
        if let Some(p) = prev_ratio1 {
            r.y1_ratio_increment = r.y1_ratio_increment.min(ratio1 - p);
        }
        prev_ratio1 = Some(ratio1);
        r.y2_min = r.y2_min.min(y2);
        r.y2_bound = r.y2_bound.min((t - s) / gt - y2);
        if s < t * (1.0 - 1e-6) {
            let ratio2 = y2 / yg;
            if let Some(p) = prev_ratio2 {
                r.y2_ratio_decrement = r.y2_ratio_decrement.min(p - ratio2);
            }
            prev_ratio2 = Some(ratio2);
        }
        r.product_bound = r.product_bound.min(g * yg - y1 * y2);
        r.y_gamma_bound = r.y_gamma_bound.min((t - s) / gt - yg);
        r.wronskian_error = r.wronskian_error.max((dy2 * y1 - dy1 * y2 + 1.0).abs());
    }
    let y2 = LinearBvpSolution::build(Profile::Y2, sys.clone(), Repr::Y2);
    let (a, b) = y2.boundary_residuals();
    r.y2_residual = a.max(b);

    let grid: Vec<f64> = (0..=40).map(|i| ((t.ln_1p() * i as f64 / 40.0).exp() - 1.0).clamp(0.0, t)).collect();
    for &s in &grid {
        for &tau in &grid {
            r.kernel = r.kernel.min(kernel_bound_margin(&sys, s, tau)?);
            r.kernel_asymmetry = r.kernel_asymmetry.max((sys.kernel(s, tau)? - sys.kernel(tau, s)?).abs());
        }
    }

    for f in forcings {
        let sol = forced_on(sys.clone(), f, &ode_options(), &[])?;
        let m = forced_margins(&sol, f, &pts)?;
        r.forced_gamma = r.forced_gamma.min(m.gamma_weighted);
        r.forced_distance = r.forced_distance.min(m.distance_weighted);
        let (a, b) = sol.boundary_residuals();
        r.forced_residual = r.forced_residual.max(a.max(b));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficient_closed_forms() {
        let t = 3.0;
        let h = CoefficientPath::zero();
        let y1 = solve_y1(&h, t, 1.0).unwrap();
        let y2 = solve_y2(&h, t).unwrap();
        for i in 0..=30 {
            let s = t * i as f64 / 30.0;
            assert!((y1.eval(s).0 - (1.0 + s)).abs() < 1e-10);
            assert!((y2.eval(s).0 - (t - s) / (1.0 + t)).abs() < 1e-10);
            assert!((y2.eval(s).1 + 1.0 / (1.0 + t)).abs() < 1e-10);
        }
    }

    #[test]
    fn forced_unit_closed_form() {
        let t = 2.0;
        let sol = solve_forced(&CoefficientPath::zero(), |_| 1.0, t).unwrap();
        let a = -t * t / (2.0 * (t + 1.0));
        for i in 0..=20 {
            let s = t * i as f64 / 20.0;
            let (y, dy) = sol.eval(s);
            assert!((y - (0.5 * s * s + a * (s + 1.0))).abs() < 1e-10, "s={s}");
            assert!((dy - (s + a)).abs() < 1e-10);
        }
    }

    #[test]
    fn scaling_is_linear() {
        let h = CoefficientPath::extreme(-1.0);
        let a = solve_y1(&h, 5.0, 1.0).unwrap();
        let b = solve_y1(&h, 5.0, 2.0).unwrap();
        for (ya, yb) in a.y.iter().zip(&b.y) {
            assert!((2.0 * ya - yb).abs() < 1e-14 * yb.abs().max(1.0));
        }
    }

    #[test]
    fn inadmissible_rejected() {
        let h = CoefficientPath::new("big", |s| 1.5 * damping(s));
        assert!(matches!(solve_y1(&h, 1.0, 1.0), Err(Error::InadmissibleCoefficient { .. })));
        assert!(matches!(solve_y2(&CoefficientPath::zero(), 0.0), Err(Error::InvalidTime(_))));
    }

    #[test]
    fn extreme_paths_satisfy_all_bounds() {
        let f = |s: f64| (3.0 * s).sin();
        for sign in [1.0, -1.0] {
            for t in [0.1, 1.0, 10.0, 100.0] {
                let r = comparison_margins(&CoefficientPath::extreme(sign), t, &[f]).unwrap();
                assert!(r.holds(1e-8), "{r:?}");
            }
        }
    }
}
