//! The screened Poisson equation (1 − ∂ₓ²)φ = ρ on a truncated line, and the
//! time-indexed field histories that drive the characteristics.
//!
//! φ = ½e^{−|x|} ∗ ρ is split into the left and right one-sided convolutions
//! I⁻(x) = ∫_{−L}^x e^{−(x−y)}ρ and I⁺(x) = ∫_x^L e^{−(y−x)}ρ, each advanced
//! node to node by one exponential factor plus a panel integral against the
//! local degree-7 interpolant of ρ. Then φ = ½(I⁻ + I⁺), ∂ₓφ = ½(I⁺ − I⁻).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{lagrange_weights, spatial_derivative, GridFunction, LagrangeStencil, STENCIL};
use crate::quadrature::GaussLegendre;
use crate::combinatorics::factorial_f64;
use crate::weights::{damping, gamma, phi};

/// Boundary values of ρ must satisfy |ρ| ≤ BOUNDARY_DECAY·max(1, ‖ρ‖∞).
pub const BOUNDARY_DECAY: f64 = 1e-12;

/// Panel weights ∫₀ʰ e^{−(h−u)}ℓⱼ(u)du (left sweep) and ∫₀ʰ e^{−u}ℓⱼ(u)du
/// (right sweep), for the panel between stencil nodes p and p+1.
struct PanelWeights {
    decay: f64,
    left: [[f64; STENCIL]; STENCIL - 1],
    right: [[f64; STENCIL]; STENCIL - 1],
}

impl PanelWeights {
    fn new(h: f64) -> Self {
        let gl = GaussLegendre::new(16);
        let mut left = [[0.0; STENCIL]; STENCIL - 1];
        let mut right = [[0.0; STENCIL]; STENCIL - 1];
        for p in 0..STENCIL - 1 {
            for (tau, w) in gl.on(0.0, 1.0) {
                let l = lagrange_weights(p as f64 + tau);
                let el = h * w * (-h * (1.0 - tau)).exp();
                let er = h * w * (-h * tau).exp();
                for j in 0..STENCIL {
                    left[p][j] += el * l[j];
                    right[p][j] += er * l[j];
                }
            }
        }
        Self { decay: (-h).exp(), left, right }
    }
}

/// |Δ⁷v| over the stencil starting at `start`.
fn top_difference(v: &[f64], start: usize) -> f64 {
    const C: [f64; STENCIL] = [-1.0, 7.0, -21.0, 35.0, -35.0, 21.0, -7.0, 1.0];
    C.iter().zip(&v[start..start + STENCIL]).map(|(c, x)| c * x).sum::<f64>().abs()
}

/// Stencil for the panel [xᵢ, xᵢ₊₁]: centred unless its top difference is a
/// sizeable fraction of the local values (a kink) and a shifted stencil has a
/// far smaller one, which moves it off a kink lying on a node.
fn panel_stencil(v: &[f64], i: usize) -> (usize, usize) {
    const KINK: f64 = 1e-4;
    const SWITCH: f64 = 1e-2;
    let n = v.len();
    let centred = i.saturating_sub(STENCIL / 2 - 1).min(n - STENCIL);
    let d0 = top_difference(v, centred);
    let local = v[centred..centred + STENCIL].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if d0 <= KINK * local {
        return (centred, i - centred);
    }
    let lo = i.saturating_sub(STENCIL - 2);
    let hi = i.min(n - STENCIL);
    let mut best = (centred, d0);
    for start in lo..=hi {
        let d = top_difference(v, start);
        if d < best.1 {
            best = (start, d);
        }
    }
    let start = if best.1 < SWITCH * d0 { best.0 } else { centred };
    (start, i - start)
}

/// φ and ∂ₓφ for ½e^{−|x|} ∗ ρ restricted to [−L, L], with no decay check.
pub fn convolve_kernel(rho: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    let n = rho.len();
    let w = PanelWeights::new(rho.spacing());
    let v = rho.values();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    for i in 0..n - 1 {
        let (start, p) = panel_stencil(v, i);
        let s = &v[start..start + STENCIL];
        let add: f64 = w.left[p].iter().zip(s).map(|(a, b)| a * b).sum();
        left[i + 1] = w.decay * left[i] + add;
    }
    for i in (0..n - 1).rev() {
        let (start, p) = panel_stencil(v, i);
        let s = &v[start..start + STENCIL];
        let add: f64 = w.right[p].iter().zip(s).map(|(a, b)| a * b).sum();
        right[i] = w.decay * right[i + 1] + add;
    }
    let phi = left.iter().zip(&right).map(|(a, b)| 0.5 * (a + b)).collect();
    let dphi = left.iter().zip(&right).map(|(a, b)| 0.5 * (b - a)).collect();
    Ok((rho.with_values(phi)?, rho.with_values(dphi)?))
}

pub fn check_boundary_decay(rho: &GridFunction) -> Result<()> {
    let v = rho.values();
    let edge = v[0].abs().max(v[v.len() - 1].abs());
    if edge > BOUNDARY_DECAY * rho.sup_norm().max(1.0) {
        return Err(Error::BoundaryDecay(edge));
    }
    Ok(())
}

pub fn solve_potential(rho: &GridFunction) -> Result<GridFunction> {
    check_boundary_decay(rho)?;
    Ok(convolve_kernel(rho)?.0)
}

/// [φ, ∂ₓφ, …, ∂ₓᵐφ] for m = `max_order`, using ∂ₓᵏ⁺²φ = ∂ₓᵏφ − ∂ₓᵏρ.
pub fn potential_derivatives(rho: &GridFunction, max_order: usize) -> Result<Vec<GridFunction>> {
    check_boundary_decay(rho)?;
    let (p0, p1) = convolve_kernel(rho)?;
    let mut out = vec![p0, p1];
    for k in 2..=max_order {
        let drho = spatial_derivative(rho, k - 2)?;
        let next = drho.axpy(-1.0, &out[k - 2])?;
        out.push(next);
    }
    out.truncate(max_order + 1);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxPrincipleMargins {
    pub m1: f64,
    pub m2: f64,
}

/// m1 = ‖∂ⁿρ‖ − ‖∂ⁿφ‖, m2 = min(2‖∂ⁿρ‖, ‖∂ⁿ⁺²ρ‖) − ‖∂ⁿ⁺²φ‖.
pub fn max_principle_margins(rho: &GridFunction, phi: &GridFunction, n: usize) -> Result<MaxPrincipleMargins> {
    rho.check_same(phi)?;
    let r_n = spatial_derivative(rho, n)?.sup_norm();
    let r_n2 = spatial_derivative(rho, n + 2)?.sup_norm();
    let p_n = spatial_derivative(phi, n)?.sup_norm();
    let p_n2 = spatial_derivative(phi, n + 2)?.sup_norm();
    Ok(MaxPrincipleMargins { m1: r_n - p_n, m2: (2.0 * r_n).min(r_n2) - p_n2 })
}

/// Potential derivatives on a strictly increasing set of times, interpolated
/// in s by C¹ cubic Hermite splines with three-point slopes and in x by
/// eight-point Lagrange polynomials.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    nodes: Vec<f64>,
    half_width: f64,
    len: usize,
    values: Vec<Vec<Vec<f64>>>,
    slopes: Vec<Vec<Vec<f64>>>,
    zero: bool,
}

impl FieldHistory {
    /// Builds the history from densities at the nodes; slices are solved in parallel.
    pub fn from_densities(nodes: Vec<f64>, densities: &[GridFunction], max_order: usize) -> Result<Self> {
        if densities.len() != nodes.len() {
            return Err(Error::Grid(format!("{} densities for {} time nodes", densities.len(), nodes.len())));
        }
        let slices = densities
            .par_iter()
            .map(|rho| potential_derivatives(rho, max_order))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slices(nodes, slices)
    }

    /// History whose slices are given directly, `slices[k][order]`.
    pub fn from_slices(nodes: Vec<f64>, slices: Vec<Vec<GridFunction>>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != slices.len() {
            return Err(Error::Grid("time nodes and slices must be nonempty and equal in number".into()));
        }
        if nodes.iter().any(|s| !s.is_finite()) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("time nodes must increase strictly".into()));
        }
        let first = &slices[0][0];
        let orders = slices[0].len();
        for sl in &slices {
            if sl.len() != orders {
                return Err(Error::Grid("every slice needs the same derivative orders".into()));
            }
            for g in sl {
                first.check_same(g)?;
            }
        }
        let (half_width, len) = (first.half_width(), first.len());
        let values: Vec<Vec<Vec<f64>>> =
            slices.into_iter().map(|sl| sl.into_iter().map(GridFunction::into_values).collect()).collect();
        let zero = values.iter().all(|sl| sl.iter().all(|v| v.iter().all(|&x| x == 0.0)));
        let slopes = time_slopes(&nodes, &values);
        Ok(Self { nodes, half_width, len, values, slopes, zero })
    }

    pub fn zero(nodes: Vec<f64>, half_width: f64, len: usize, max_order: usize) -> Result<Self> {
        let z = GridFunction::zeros(half_width, len)?;
        let slices = nodes.iter().map(|_| vec![z.clone(); max_order + 1]).collect();
        Self::from_slices(nodes, slices)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn max_order(&self) -> usize {
        self.values[0].len() - 1
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn grid_len(&self) -> usize {
        self.len
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn slice(&self, node: usize, order: usize) -> Result<GridFunction> {
        GridFunction::new(self.half_width, self.values[node][order].clone())
    }

    fn locate(&self, s: f64) -> Result<(usize, [f64; 4])> {
        let (a, b) = (self.start(), self.end());
        let slack = 1e-12 * (1.0 + s.abs());
        if !(s >= a - slack && s <= b + slack) {
            return Err(Error::HistoryGap { s, reason: format!("outside the history span [{a}, {b}]") });
        }
        let m = self.nodes.len();
        if m == 1 {
            return Ok((0, [1.0, 0.0, 0.0, 0.0]));
        }
        let k = self.nodes.partition_point(|&x| x <= s).clamp(1, m - 1) - 1;
        let dt = self.nodes[k + 1] - self.nodes[k];
        let th = ((s - self.nodes[k]) / dt).clamp(0.0, 1.0);
        let th2 = th * th;
        let th3 = th2 * th;
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = (th3 - 2.0 * th2 + th) * dt;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = (th3 - th2) * dt;
        Ok((k, [h00, h10, h01, h11]))
    }

    /// Writes ∂ₓᵒφ(x, s) for o = lo, lo+1, … into `out`. Outside [−L, L] the
    /// potential continues as the decaying free solution.
    pub fn eval_into(&self, x: f64, s: f64, lo: usize, out: &mut [f64]) -> Result<()> {
        if lo + out.len() > self.max_order() + 1 {
            return Err(Error::MissingOrder(lo + out.len() - 1));
        }
        let (k, h) = self.locate(s)?;
        if !x.is_finite() {
            return Err(Error::OutOfDomain { s, x });
        }
        if self.zero {
            out.fill(0.0);
            return Ok(());
        }
        if x.abs() > self.half_width {
            // ρ vanishes outside, so φ = φ(±L)e^{−(|x|−L)} there
            let i = if x > 0.0 { self.len - 1 } else { 0 };
            let mut edge = h[0] * self.values[k][0][i] + h[1] * self.slopes[k][0][i];
            if h[2] != 0.0 || h[3] != 0.0 {
                edge += h[2] * self.values[k + 1][0][i] + h[3] * self.slopes[k + 1][0][i];
            }
            let decay = edge * (-(x.abs() - self.half_width)).exp();
            let sign = if x > 0.0 { -1.0 } else { 1.0 };
            for (j, o) in out.iter_mut().enumerate() {
                *o = decay * if (lo + j) % 2 == 0 { 1.0 } else { sign };
            }
            return Ok(());
        }
        let st = LagrangeStencil::new(self.half_width, self.len, x)?;
        let r = st.start..st.start + STENCIL;
        for (j, o) in out.iter_mut().enumerate() {
            let ord = lo + j;
            let mut acc = h[0] * st.apply_slice(&self.values[k][ord][r.clone()])
                + h[1] * st.apply_slice(&self.slopes[k][ord][r.clone()]);
            if h[2] != 0.0 || h[3] != 0.0 {
                acc += h[2] * st.apply_slice(&self.values[k + 1][ord][r.clone()])
                    + h[3] * st.apply_slice(&self.slopes[k + 1][ord][r.clone()]);
            }
            *o = acc;
        }
        Ok(())
    }

    pub fn eval(&self, order: usize, x: f64, s: f64) -> Result<f64> {
        let mut out = [0.0];
        self.eval_into(x, s, order, &mut out)?;
        Ok(out[0])
    }

    /// The whole order-`order` slice interpolated to time s.
    pub fn slice_at(&self, order: usize, s: f64) -> Result<GridFunction> {
        if order > self.max_order() {
            return Err(Error::MissingOrder(order));
        }
        let (k, h) = self.locate(s)?;
        let k1 = (k + 1).min(self.nodes.len() - 1);
        let v: Vec<f64> = (0..self.len)
            .map(|i| {
                h[0] * self.values[k][order][i]
                    + h[1] * self.slopes[k][order][i]
                    + h[2] * self.values[k1][order][i]
                    + h[3] * self.slopes[k1][order][i]
            })
            .collect();
        GridFunction::new(self.half_width, v)
    }

    pub fn sup_norm_at(&self, order: usize, s: f64) -> Result<f64> {
        Ok(self.slice_at(order, s)?.sup_norm())
    }

    /// max over nodes and interval midpoints of ‖∂ₓ²φ(s)‖∞ / (−γ″(s)/γ(s)).
    pub fn damping_ratio(&self) -> Result<f64> {
        if self.max_order() < 2 {
            return Err(Error::MissingOrder(2));
        }
        let mut times = self.nodes.clone();
        times.extend(self.nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let mut worst: f64 = 0.0;
        for s in times {
            worst = worst.max(self.sup_norm_at(2, s)? / damping(s));
        }
        Ok(worst)
    }
}

impl LagrangeStencil {
    #[inline]
    fn apply_slice(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..STENCIL {
            acc += self.weights[j] * v[j];
        }
        acc
    }
}

/// Slopes in s from the quadratic through each node and its neighbours (the
/// first or last three nodes at the ends).
fn time_slopes(nodes: &[f64], values: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let m = nodes.len();
    let orders = values[0].len();
    let len = values[0][0].len();
    let mut out = vec![vec![vec![0.0; len]; orders]; m];
    if m == 1 {
        return out;
    }
    if m == 2 {
        let dt = nodes[1] - nodes[0];
        for o in 0..orders {
            for i in 0..len {
                let d = (values[1][o][i] - values[0][o][i]) / dt;
                out[0][o][i] = d;
                out[1][o][i] = d;
            }
        }
        return out;
    }
    for k in 0..m {
        // quadratic through three consecutive nodes, differentiated at node k
        let c = k.clamp(1, m - 2);
        let (s0, s1, s2) = (nodes[c - 1], nodes[c], nodes[c + 1]);
        let z = nodes[k];
        let w0 = (2.0 * z - s1 - s2) / ((s0 - s1) * (s0 - s2));
        let w1 = (2.0 * z - s0 - s2) / ((s1 - s0) * (s1 - s2));
        let w2 = (2.0 * z - s0 - s1) / ((s2 - s0) * (s2 - s1));
        for o in 0..orders {
            for i in 0..len {
                out[k][o][i] = w0 * values[c - 1][o][i] + w1 * values[c][o][i] + w2 * values[c + 1][o][i];
            }
        }
    }
    out
}

/// min{φₙ(t)(n!)²/270, φₙ₋₁(t)((n−1)!)²/3}.
pub fn field_weight_bound(n: u32, t: f64) -> f64 {
    let f = factorial_f64(n);
    let g = factorial_f64(n - 1);
    (phi(n, t) * f * f / 270.0).min(phi(n - 1, t) * g * g / 3.0)
}

/// ∫₀ᵗ ‖∂ₓⁿ⁺¹φ(s)‖∞ γ(s)ⁿ (t−s)/γ(t) ds with four Gauss points per history interval.
pub fn weighted_field_integral(hist: &FieldHistory, n: u32, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("the weighted integral needs n >= 1".into()));
    }
    let order = n as usize + 1;
    if order > hist.max_order() {
        return Err(Error::MissingOrder(order));
    }
    if hist.start() > 0.0 || hist.end() < t * (1.0 - 1e-14) {
        return Err(Error::HistoryGap { s: t, reason: "history must cover [0, t]".into() });
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let gl = GaussLegendre::new(4);
    let gt = gamma(t);
    let mut total = 0.0;
    for w in hist.nodes().windows(2) {
        let (a, b) = (w[0], w[1].min(t));
        if b <= a {
            break;
        }
        for (s, wt) in gl.on(a, b) {
            total += wt * hist.sup_norm_at(order, s)? * gamma(s).powi(n as i32) * (t - s) / gt;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_solution_default_resolution() {
        let rho = GridFunction::from_fn(20.0, 1024, |x| (3.0 - 4.0 * x * x) * (-x * x).exp()).unwrap();
        let phi = solve_potential(&rho).unwrap();
        let err = rho.xs().iter().zip(phi.values()).fold(0.0f64, |m, (x, p)| m.max((p - (-x * x).exp()).abs()));
        assert!(err < 1e-9, "{err:e}");
    }

    #[test]
    fn force_matches_derivative() {
        let rho = GridFunction::from_fn(20.0, 801, |x| (3.0 - 4.0 * x * x) * (-x * x).exp()).unwrap();
        let d = potential_derivatives(&rho, 4).unwrap();
        for (i, x) in rho.xs().into_iter().enumerate() {
            let g = (-x * x).exp();
            assert!((d[1].values()[i] + 2.0 * x * g).abs() < 1e-8);
            assert!((d[2].values()[i] - (4.0 * x * x - 2.0) * g).abs() < 1e-8);
            assert!((d[3].values()[i] - (12.0 * x - 8.0 * x.powi(3)) * g).abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_mass() {
        let l = 7.0;
        let one = GridFunction::from_fn(l, 281, |_| 1.0).unwrap();
        let (phi, _) = convolve_kernel(&one).unwrap();
        let mid = phi.len() / 2;
        assert!((phi.values()[mid] - (1.0 - (-l as f64).exp())).abs() < 1e-13);
        assert!(matches!(solve_potential(&one), Err(Error::BoundaryDecay(_))));
    }

    #[test]
    fn history_reproduces_quadratics_in_time() {
        let nodes = vec![0.0, 0.3, 1.0, 2.5, 4.0];
        let f = |x: f64, s: f64| (1.0 + x) * (1.0 + 2.0 * s - 0.25 * s * s);
        let slices = nodes
            .iter()
            .map(|&s| vec![GridFunction::from_fn(2.0, 17, |x| f(x, s)).unwrap()])
            .collect();
        let h = FieldHistory::from_slices(nodes, slices).unwrap();
        for &s in &[0.0, 0.1, 0.7, 2.0, 3.9, 4.0] {
            assert!((h.eval(0, 0.37, s).unwrap() - f(0.37, s)).abs() < 1e-12, "s={s}");
        }
        assert!(matches!(h.eval(0, 0.0, 4.5), Err(Error::HistoryGap { .. })));
        let edge = h.eval(0, 2.0, 1.0).unwrap();
        assert!((h.eval(0, 2.5, 1.0).unwrap() - edge * (-0.5f64).exp()).abs() < 1e-12);
        assert!(matches!(h.eval(0, f64::NAN, 1.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(h.eval(1, 0.0, 1.0), Err(Error::MissingOrder(1))));
    }

    #[test]
    fn weighted_field_zero_and_bound_value() {
        let h = FieldHistory::zero(vec![0.0, 1.0, 2.0], 5.0, 33, 3).unwrap();
        assert_eq!(weighted_field_integral(&h, 1, 2.0).unwrap(), 0.0);
        for &t in &[0.0, 1.0, 100.0] {
            assert!((field_weight_bound(1, t) - 1.0 / 270.0).abs() < 1e-18);
        }
    }
}
