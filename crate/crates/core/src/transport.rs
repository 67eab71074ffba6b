//! Initial data, the shear f̃₀(x,v) = f₀(x+v, v), free streaming, and the
//! density slices with their decay normalization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{check_charge, ladder_margins, solve_bvp_from, Ladder, ShootingOptions};
use crate::combinatorics::{binomial_f64, factorial_f64, FaaDiBrunoTable};
use crate::error::{Error, Result};
use crate::grid::{spatial_derivative, GridFunction};
use crate::quadrature::{integrate_2d, integrate_adaptive, Estimate, GaussLegendre};
use crate::screened_field::FieldHistory;
use crate::weights::{gamma, phi};

/// Norm bound of the initial-data condition: ‖(∂ₓ+∂ᵥ)ⁿ⁺¹f₀‖₁ ≤ (n!)²/10⁴.
pub fn initial_data_bound(n: u32) -> f64 {
    let f = factorial_f64(n);
    f * f / 1e4
}

/// Exponent cut used to decide where Gaussian data is negligible:
/// e^{−DATA_CUT} ≈ 4e−18 relative to the amplitude.
pub const DATA_CUT: f64 = 40.0;

/// A·exp(−a((x−x_c)² + (v−v_c)²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub amplitude: f64,
    pub a: f64,
    pub xc: f64,
    pub vc: f64,
}

impl GaussianComponent {
    #[inline]
    fn quad(&self, x: f64, v: f64) -> f64 {
        let dx = x - self.xc;
        let dv = v - self.vc;
        self.a * (dx * dx + dv * dv)
    }

    /// (∂ₓ+∂ᵥ)ᵏ of the component for k = 0..out.len(), via Pₖ₊₁ = −uPₖ − 4a·k·Pₖ₋₁.
    #[inline]
    fn directional_into(&self, x: f64, v: f64, out: &mut [f64]) {
        let e = self.amplitude * (-self.quad(x, v)).exp();
        let u = 2.0 * self.a * ((x - self.xc) + (v - self.vc));
        let c = 4.0 * self.a;
        let (mut p_prev, mut p) = (0.0, 1.0);
        for (k, o) in out.iter_mut().enumerate() {
            *o += p * e;
            let next = -u * p - c * k as f64 * p_prev;
            p_prev = p;
            p = next;
        }
    }
}

/// Library initial data: finite sums of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub components: Vec<GaussianComponent>,
}

impl InitialData {
    pub fn zero() -> Self {
        Self { components: vec![] }
    }

    pub fn gaussian(amplitude: f64, a: f64) -> Result<Self> {
        Self::mixture(vec![GaussianComponent { amplitude, a, xc: 0.0, vc: 0.0 }])
    }

    pub fn mixture(components: Vec<GaussianComponent>) -> Result<Self> {
        for c in &components {
            if !(c.a > 0.0 && c.a.is_finite()) {
                return Err(Error::InitialData(format!("Gaussian rate must be positive, got {}", c.a)));
            }
            if !(c.amplitude.is_finite() && c.xc.is_finite() && c.vc.is_finite()) {
                return Err(Error::InitialData("non-finite component parameter".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.amplitude == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let components =
            self.components.iter().map(|c| GaussianComponent { amplitude: c.amplitude * factor, ..*c }).collect();
        Self { components }
    }

    /// Σ|Aᵢ|.
    pub fn total_amplitude(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude.abs()).sum()
    }

    pub fn min_rate(&self) -> f64 {
        self.components.iter().map(|c| c.a).fold(f64::INFINITY, f64::min)
    }

    /// ∬f₀ dx dv.
    pub fn mass(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude * std::f64::consts::PI / c.a).sum()
    }

    /// Invariant under (x, v) ↦ (−x, −v).
    pub fn is_even(&self) -> bool {
        self.components.iter().all(|c| {
            (c.xc == 0.0 && c.vc == 0.0)
                || self.components.iter().any(|d| {
                    d.amplitude == c.amplitude && d.a == c.a && d.xc == -c.xc && d.vc == -c.vc
                })
        })
    }

    pub fn f0(&self, x: f64, v: f64) -> f64 {
        self.components.iter().map(|c| c.amplitude * (-c.quad(x, v)).exp()).sum()
    }

    pub fn f0_tilde(&self, x: f64, v: f64) -> f64 {
        self.f0(x + v, v)
    }

    /// (∂ₓ+∂ᵥ)ⁿf₀(x, v).
    pub fn directional(&self, n: usize, x: f64, v: f64) -> f64 {
        let mut out = vec![0.0; n + 1];
        self.directional_all(x, v, &mut out);
        out[n]
    }

    /// (∂ₓ+∂ᵥ)ᵏf₀(x, v) for k = 0..out.len().
    pub fn directional_all(&self, x: f64, v: f64, out: &mut [f64]) {
        out.fill(0.0);
        for c in &self.components {
            c.directional_into(x, v, out);
        }
    }

    /// ∂ᵥᵏf̃₀(x, v) for k = 0..out.len(), using ∂ᵥᵏf̃₀(x,v) = ((∂ₓ+∂ᵥ)ᵏf₀)(x+v, v).
    pub fn tilde_dv_all(&self, x: f64, v: f64, out: &mut [f64]) {
        self.directional_all(x + v, v, out);
    }

    pub fn tilde_dv(&self, n: usize, x: f64, v: f64) -> f64 {
        self.directional(n, x + v, v)
    }

    /// Σ|Aᵢ|·exp(−0.9·aᵢQᵢ): a smooth majorant used to prune negligible regions.
    pub fn envelope(&self, x: f64, v: f64) -> f64 {
        self.components.iter().map(|c| c.amplitude.abs() * (-0.9 * c.quad(x, v)).exp()).sum()
    }

    /// x₀ interval outside which f̃₀(x₀, (x−x₀)/(1+t)) is below e^{−DATA_CUT} of the
    /// amplitude for every component, with `pad` added on both sides.
    pub fn streaming_window(&self, x: f64, t: f64, pad: f64) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let tp = 1.0 + t;
        for c in &self.components {
            if c.amplitude == 0.0 {
                continue;
            }
            // Q(x₀) = a[(α x₀ + β)² + (−x₀/(1+t) + δ)²] ≤ cut
            let alpha = t / tp;
            let beta = x / tp - c.xc;
            let gam = -1.0 / tp;
            let delta = x / tp - c.vc;
            let cut = DATA_CUT / c.a;
            let qa = alpha * alpha + gam * gam;
            let qb = 2.0 * (alpha * beta + gam * delta);
            let qc = beta * beta + delta * delta - cut;
            let disc = qb * qb - 4.0 * qa * qc;
            if disc <= 0.0 {
                continue;
            }
            let r = disc.sqrt();
            lo = lo.min((-qb - r) / (2.0 * qa));
            hi = hi.max((-qb + r) / (2.0 * qa));
        }
        (lo < hi).then_some((lo - pad, hi + pad))
    }

    /// Square in rotated coordinates p = (x+v)/√2, q = (v−x)/√2 outside of
    /// which the data and its derivatives up to `order` are negligible.
    fn rotated_box(&self, order: usize) -> ((f64, f64), (f64, f64)) {
        let s2 = std::f64::consts::SQRT_2;
        let mut p = (f64::INFINITY, f64::NEG_INFINITY);
        let mut q = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.components {
            let r = ((order as f64 + 1.0).sqrt() + 7.0) / c.a.sqrt();
            let pc = (c.xc + c.vc) / s2;
            let qc = (c.vc - c.xc) / s2;
            p = (p.0.min(pc - r), p.1.max(pc + r));
            q = (q.0.min(qc - r), q.1.max(qc + r));
        }
        (p, q)
    }
}

/// The shear of an arbitrary phase-space function.
pub fn shear_transform<F: Fn(f64, f64) -> f64>(f0: F) -> impl Fn(f64, f64) -> f64 {
    move |x, v| f0(x + v, v)
}

/// ‖(∂ₓ+∂ᵥ)ⁿf₀‖₁ by nested adaptive quadrature in rotated coordinates.
pub fn directional_norm(data: &InitialData, n: usize, rtol: f64) -> Result<Estimate> {
    if data.is_zero() {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let (pr, qr) = data.rotated_box(n);
    let mut buf = vec![0.0; n + 1];
    let scale = data.total_amplitude() * factorial_f64(n as u32).max(1.0) * (4.0 * data.min_rate()).powf(n as f64 / 2.0);
    integrate_2d(
        |p, q| {
            let x = (p - q) * s2;
            let v = (p + q) * s2;
            data.directional_all(x, v, &mut buf);
            buf[n].abs()
        },
        pr,
        qr,
        rtol,
        rtol * 1e-3 * scale,
    )
}

/// ‖(∂ₓ+∂ᵥ)ⁿf₀‖₁ for a single centred Gaussian reduced to one dimension:
/// A√(π/a)∫|Pₙ(2√2·a·p)|e^{−ap²}dp.
pub fn directional_norm_single(c: &GaussianComponent, n: usize, rtol: f64) -> Result<f64> {
    let r = ((n as f64 + 1.0).sqrt() + 7.0) / c.a.sqrt();
    let k = 2.0 * std::f64::consts::SQRT_2 * c.a;
    let cc = 4.0 * c.a;
    let est = integrate_adaptive(
        |p| {
            let u = k * p;
            let (mut pm, mut pk) = (0.0, 1.0);
            for j in 0..n {
                let next = -u * pk - cc * j as f64 * pm;
                pm = pk;
                pk = next;
            }
            pk.abs() * (-c.a * p * p).exp()
        },
        -r,
        r,
        &[0.0],
        rtol,
        0.0,
    )?;
    Ok(c.amplitude.abs() * (std::f64::consts::PI / c.a).sqrt() * est.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateMargin {
    pub n: u32,
    pub norm: f64,
    pub bound: f64,
    pub margin: f64,
    pub quad_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub margins: Vec<CertificateMargin>,
}

impl CertificateReport {
    pub fn first_failure(&self) -> Option<u32> {
        self.margins.iter().find(|m| m.margin < 0.0).map(|m| m.n)
    }

    pub fn require(&self) -> Result<()> {
        match self.first_failure() {
            None => Ok(()),
            Some(n) => Err(Error::InitialData(format!("initial-data bound fails at order n = {n}"))),
        }
    }
}

/// Margins (n!)²/10⁴ − ‖(∂ₓ+∂ᵥ)ⁿ⁺¹f₀‖₁ for n = 0..=n_max.
pub fn certify_initial_data(data: &InitialData, n_max: u32) -> Result<CertificateReport> {
    let margins = (0..=n_max)
        .map(|n| {
            let est = directional_norm(data, n as usize + 1, 1e-9)?;
            let bound = initial_data_bound(n);
            Ok(CertificateMargin { n, norm: est.value, bound, margin: bound - est.value, quad_error: est.error })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CertificateReport { margins })
}

/// Rescales `shape` to the largest amplitude passing the certificate with the
/// given safety factor, then certifies the result.
pub fn auto_tune_amplitude(shape: &InitialData, n_max: u32, safety: f64) -> Result<(InitialData, CertificateReport)> {
    if shape.is_zero() {
        return Err(Error::InitialData("cannot tune the amplitude of zero data".into()));
    }
    if !(safety >= 1.0) {
        return Err(Error::InitialData(format!("safety factor must be at least 1, got {safety}")));
    }
    let unit = certify_initial_data(shape, n_max)?;
    let factor = unit
        .margins
        .iter()
        .map(|m| m.bound / (safety * m.norm))
        .fold(f64::INFINITY, f64::min);
    let data = shape.scaled(factor);
    let report = certify_initial_data(&data, n_max)?;
    report.require()?;
    Ok((data, report))
}

/// Phase-space data seen through the shear: ∂ᵥᵏf̃₀ and a support window.
pub trait ShearedData: Sync {
    /// ∂ᵥᵏf̃₀(x, v) for k = 0..out.len().
    fn tilde_dv_all(&self, x: f64, v: f64, out: &mut [f64]);
    /// x₀ interval carrying the integrand of the density at (x, t).
    fn window(&self, x: f64, t: f64) -> Option<(f64, f64)>;
}

impl ShearedData for InitialData {
    fn tilde_dv_all(&self, x: f64, v: f64, out: &mut [f64]) {
        InitialData::tilde_dv_all(self, x, v, out)
    }

    fn window(&self, x: f64, t: f64) -> Option<(f64, f64)> {
        self.streaming_window(x, t, 0.5)
    }
}

/// ∂ₓⁿρ(x,t) = (t+1)^{−n−1}∫(∂ᵥⁿf̃₀)(x₀, (x−x₀)/(t+1))dx₀ on the grid of `like`.
pub fn free_streaming_density<D: ShearedData + ?Sized>(
    data: &D,
    half_width: f64,
    len: usize,
    t: f64,
    n: usize,
    rtol: f64,
) -> Result<GridFunction> {
    let grid = GridFunction::zeros(half_width, len)?;
    let tp = 1.0 + t;
    let scale = tp.powi(-(n as i32) - 1);
    let mut vals = Vec::with_capacity(len);
    let mut buf = vec![0.0; n + 1];
    for x in grid.xs() {
        let Some((lo, hi)) = data.window(x, t) else {
            vals.push(0.0);
            continue;
        };
        let mut g = |x0: f64| {
            data.tilde_dv_all(x0, (x - x0) / tp, &mut buf);
            buf[n]
        };
        // absolute floor from a coarse sweep; the tails are rounding noise below it
        let peak = (0..=64).map(|k| g(lo + (hi - lo) * k as f64 / 64.0).abs()).fold(0.0, f64::max);
        let est = integrate_adaptive(g, lo, hi, &[], rtol, rtol * 1e-3 * peak * (hi - lo))?;
        vals.push(scale * est.value);
    }
    grid.with_values(vals)
}

/// Physicists' Hermite polynomial Hₙ(y).
pub fn hermite(n: usize, y: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * y);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * y * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Closed form of ∂ₓⁿρ under free streaming for Gaussian mixtures:
/// each component contributes A√(π/(a(1+t²)))·∂ₓⁿe^{−b y²}, b = a/(1+t²),
/// y = x − x_c − v_c t.
pub fn free_streaming_closed_form(data: &InitialData, x: f64, t: f64, n: usize) -> f64 {
    data.components
        .iter()
        .map(|c| {
            let d = 1.0 + t * t;
            let b = c.a / d;
            let y = x - c.xc - c.vc * t;
            let sb = b.sqrt();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            c.amplitude * (std::f64::consts::PI / (c.a * d)).sqrt()
                * sign
                * sb.powi(n as i32)
                * hermite(n, sb * y)
                * (-b * y * y).exp()
        })
        .sum()
}

/// The decay envelope 3ⁿ(n!)²(t+1)^{−n−1}/10³.
pub fn decay_envelope(n: u32, t: f64) -> f64 {
    let f = factorial_f64(n);
    3f64.powi(n as i32) * f * f * (t + 1.0).powi(-(n as i32) - 1) / 1e3
}

/// cₙ(t) = sup|∂ₓⁿρ|·γ(t)ⁿ⁺¹/((n!)²φₙ(t)).
pub fn normalized_constant(sup: f64, n: u32, t: f64) -> f64 {
    let f = factorial_f64(n);
    sup * gamma(t).powi(n as i32 + 1) / (f * f * phi(n, t))
}

/// (n!)²φₙ(t)/(8000γ(t)ⁿ).
pub fn pure_bound(n: u32, t: f64) -> f64 {
    let f = factorial_f64(n);
    f * f * phi(n, t) / (8000.0 * gamma(t).powi(n as i32))
}

/// (n!)²φₙ(t)/(3000γ(t)ⁿ).
pub fn mixed_bound(n: u32, t: f64) -> f64 {
    let f = factorial_f64(n);
    f * f * phi(n, t) / (3000.0 * gamma(t).powi(n as i32))
}

/// ρ at one time with grid derivatives and normalized constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensitySlice {
    pub t: f64,
    /// ∂ₓⁿρ for n = 0..=n_max (index 0 is ρ itself).
    pub derivatives: Vec<GridFunction>,
    pub sups: Vec<f64>,
    pub constants: Vec<f64>,
}

impl DensitySlice {
    pub fn new(t: f64, rho: GridFunction, n_max: usize) -> Result<Self> {
        let mut derivatives = Vec::with_capacity(n_max + 1);
        for n in 1..=n_max {
            derivatives.push(spatial_derivative(&rho, n)?);
        }
        derivatives.insert(0, rho);
        Ok(Self::from_derivatives(t, derivatives))
    }

    pub fn from_derivatives(t: f64, derivatives: Vec<GridFunction>) -> Self {
        let sups: Vec<f64> = derivatives.iter().map(GridFunction::sup_norm).collect();
        let constants = sups.iter().enumerate().map(|(n, &s)| normalized_constant(s, n as u32, t)).collect();
        Self { t, derivatives, sups, constants }
    }

    pub fn rho(&self) -> &GridFunction {
        &self.derivatives[0]
    }

    pub fn n_max(&self) -> usize {
        self.derivatives.len() - 1
    }

    pub fn max_constant(&self, n_max: usize) -> f64 {
        self.constants.iter().take(n_max + 1).fold(0.0, |m, &c| m.max(c))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t,x,rho")?;
        for n in 1..self.derivatives.len() {
            write!(w, ",d{n}rho")?;
        }
        writeln!(w)?;
        let rho = self.rho();
        for i in 0..rho.len() {
            write!(w, "{:.17e},{:.17e}", self.t, rho.x(i))?;
            for d in &self.derivatives {
                write!(w, ",{:.17e}", d.values()[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Settings for the density reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionOptions {
    /// Gauss–Legendre nodes per unit length of the x₀ window.
    pub nodes_per_unit: usize,
    pub shooting: ShootingOptions,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self { nodes_per_unit: 32, shooting: ShootingOptions { linear_accept: 1e-7, ..ShootingOptions::default() } }
    }
}

/// Counters from one reconstruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ReconstructionStats {
    pub characteristics: usize,
    pub newton_iterations: usize,
    pub max_residual: f64,
}

impl ReconstructionStats {
    fn absorb(&mut self, other: &Self) {
        self.characteristics += other.characteristics;
        self.newton_iterations += other.newton_iterations;
        self.max_residual = self.max_residual.max(other.max_residual);
    }
}

/// Gauss–Legendre nodes and weights on [lo, hi] split into panels of length at most 1.
pub fn x0_nodes(gl: &GaussLegendre, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let panels = ((hi - lo).ceil() as usize).max(1);
    let h = (hi - lo) / panels as f64;
    (0..panels).flat_map(|p| gl.on(lo + p as f64 * h, lo + (p + 1) as f64 * h)).collect()
}

/// ρ(x,t) = ∫ f̃₀(x₀, w₀)|∂ₓ₀w| dx₀ at one x, marching along x₀ with a
/// warm-started shooting guess.
pub fn density_at<D: ShearedData + ?Sized>(
    data: &D,
    hist: &FieldHistory,
    q: f64,
    x: f64,
    t: f64,
    gl: &GaussLegendre,
    opts: &ReconstructionOptions,
) -> Result<(f64, ReconstructionStats)> {
    let mut stats = ReconstructionStats::default();
    let Some((lo, hi)) = data.window(x, t) else {
        return Ok((0.0, stats));
    };
    let nodes = x0_nodes(gl, lo, hi);
    let mut guess = (x - nodes[0].0) / (1.0 + t);
    let mut buf = [0.0];
    let mut acc = 0.0;
    for (i, &(x0, w)) in nodes.iter().enumerate() {
        let tr = solve_bvp_from(x, x0, t, hist, q, &opts.shooting, guess, false)?;
        stats.characteristics += 1;
        stats.newton_iterations += tr.iterations;
        stats.max_residual = stats.max_residual.max(tr.residual);
        data.tilde_dv_all(x0, tr.w0(), &mut buf);
        acc += w * buf[0] * tr.dx0_w().abs();
        if let Some(&(next, _)) = nodes.get(i + 1) {
            guess = tr.w0() + tr.dx0_w0() * (next - x0);
        }
    }
    Ok((acc, stats))
}

/// A reconstructed slice with its counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub slice: DensitySlice,
    pub stats: ReconstructionStats,
}

/// ρ∗(·, t) on the grid (half_width, len), with grid derivatives to `n_max`.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_density<D: ShearedData + ?Sized>(
    data: &D,
    hist: &FieldHistory,
    q: f64,
    half_width: f64,
    len: usize,
    t: f64,
    n_max: usize,
    opts: &ReconstructionOptions,
) -> Result<Reconstruction> {
    check_charge(q)?;
    let grid = GridFunction::zeros(half_width, len)?;
    let gl = GaussLegendre::new(opts.nodes_per_unit);
    let parts = grid
        .xs()
        .into_par_iter()
        .map(|x| density_at(data, hist, q, x, t, &gl, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = ReconstructionStats::default();
    let mut vals = Vec::with_capacity(len);
    for (v, s) in parts {
        vals.push(v);
        stats.absorb(&s);
    }
    let slice = DensitySlice::new(t, grid.with_values(vals)?, n_max)?;
    Ok(Reconstruction { slice, stats })
}

/// Under-the-integral derivatives at one (x, t), computed with the ladders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderSample {
    pub x: f64,
    pub t: f64,
    /// ∂ₓⁿρ for n = 0..=n_max.
    pub derivatives: Vec<f64>,
    /// ∫|∂ₓⁿ[f̃₀(x₀,w₀)]|dx₀.
    pub pure: Vec<f64>,
    /// ∫|∂ₓⁿ[f̃₀(x₀,w₀)∂ₓ₀w]|dx₀.
    pub mixed: Vec<f64>,
    /// Smallest min over the first-variation and ladder margins along the sampled characteristics.
    pub ladder_margin: f64,
    pub characteristics: usize,
}

/// ∂ₓⁿρ(x,t) by differentiating under the integral: ∂ₓⁿ[f̃₀(x₀,w₀)] by Faà di
/// Bruno over ∂ₓʲw₀ and the product with ∂ₓ₀w by Leibniz.
#[allow(clippy::too_many_arguments)]
pub fn ladder_sample<D: ShearedData + ?Sized>(
    data: &D,
    hist: &FieldHistory,
    q: f64,
    x: f64,
    t: f64,
    n_max: usize,
    nodes_per_unit: usize,
    shooting: &ShootingOptions,
) -> Result<LadderSample> {
    check_charge(q)?;
    let mut out = LadderSample {
        x,
        t,
        derivatives: vec![0.0; n_max + 1],
        pure: vec![0.0; n_max + 1],
        mixed: vec![0.0; n_max + 1],
        ladder_margin: f64::INFINITY,
        characteristics: 0,
    };
    let Some((lo, hi)) = data.window(x, t) else {
        return Ok(out);
    };
    let tables = (0..=n_max as u32).map(|k| FaaDiBrunoTable::new(k, false)).collect::<Result<Vec<_>>>()?;
    let gl = GaussLegendre::new(nodes_per_unit);
    let strict = ShootingOptions { linear_accept: 0.0, ..*shooting };
    let mut outer = vec![0.0; n_max + 1];
    let mut inner = vec![0.0; n_max + 1];
    let mut mixed = vec![0.0; n_max + 1];
    let mut a = vec![0.0; n_max + 1];
    let mut guess = (x - lo) / (1.0 + t);
    for (x0, w) in x0_nodes(&gl, lo, hi) {
        let tr = solve_bvp_from(x, x0, t, hist, q, &strict, guess, true)?;
        out.characteristics += 1;
        guess = tr.w0();
        if t == 0.0 {
            inner.fill(0.0);
            inner[0] = tr.w0();
            if n_max >= 1 {
                inner[1] = 1.0;
            }
            mixed.fill(0.0);
            mixed[0] = -1.0;
        } else {
            let mut ladder = Ladder::new(&tr, hist)?;
            ladder.build(n_max, n_max)?;
            for n in 0..=n_max {
                inner[n] = ladder.dxn_w0(n)?;
                mixed[n] = ladder.dxn_dx0_w(n)?;
            }
            out.ladder_margin = out.ladder_margin.min(ladder_margins(&ladder, n_max)?.min_margin());
        }
        data.tilde_dv_all(x0, tr.w0(), &mut outer);
        for k in 0..=n_max {
            a[k] = tables[k].apply(&outer, &inner);
        }
        for n in 0..=n_max {
            let c: f64 = (0..=n).map(|k| binomial_f64(n as u32, k as u32) * a[k] * mixed[n - k]).sum();
            // |∂ₓ₀w| = −∂ₓ₀w
            out.derivatives[n] -= w * c;
            out.pure[n] += w * a[n].abs();
            out.mixed[n] += w * c.abs();
        }
    }
    Ok(out)
}

/// (pure) and (mixed) margins of a sample: bound minus integral, per order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBoundMargins {
    pub t: f64,
    pub pure: Vec<f64>,
    pub mixed: Vec<f64>,
}

impl DensityBoundMargins {
    pub fn min_margin(&self) -> f64 {
        self.pure.iter().chain(&self.mixed).fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

pub fn density_bound_margins(sample: &LadderSample) -> DensityBoundMargins {
    let t = sample.t;
    DensityBoundMargins {
        t,
        pure: sample.pure.iter().enumerate().map(|(n, &v)| pure_bound(n as u32, t) - v).collect(),
        mixed: sample.mixed.iter().enumerate().map(|(n, &v)| mixed_bound(n as u32, t) - v).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directional_derivative_matches_differences() {
        let d = InitialData::mixture(vec![
            GaussianComponent { amplitude: 1.0, a: 1.3, xc: 0.2, vc: -0.4 },
            GaussianComponent { amplitude: -0.5, a: 0.7, xc: -1.0, vc: 0.3 },
        ])
        .unwrap();
        let (x, v, e) = (0.3, -0.2, 1e-4);
        let along = |s: f64| d.f0(x + s, v + s);
        let fd1 = (along(e) - along(-e)) / (2.0 * e);
        let fd2 = (along(e) - 2.0 * along(0.0) + along(-e)) / (e * e);
        assert!((d.directional(1, x, v) - fd1).abs() < 1e-7, "{} {}", d.directional(1, x, v), fd1);
        assert!((d.directional(2, x, v) - fd2).abs() < 1e-5);
    }

    #[test]
    fn shear_examples() {
        let d = InitialData::gaussian(1.0, 1.0).unwrap();
        let (x, v) = (0.4, -1.1);
        let expect = (-(x + v) * (x + v) - v * v as f64).exp();
        assert!((d.f0_tilde(x, v) - expect).abs() < 1e-15);
        let g = shear_transform(|_x, v: f64| (-v * v).exp());
        assert_eq!(g(3.0, 0.5), (-0.25f64).exp());
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 0.3), 1.0);
        assert_eq!(hermite(1, 0.3), 0.6);
        assert!((hermite(3, 0.5) - (8.0 * 0.125 - 12.0 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn closed_form_mass_and_derivative() {
        let d = InitialData::gaussian(2.0, 1.5).unwrap();
        let t = 3.0;
        let rho = GridFunction::from_fn(40.0, 4001, |x| free_streaming_closed_form(&d, x, t, 0)).unwrap();
        assert!((rho.integral() - d.mass()).abs() < 1e-12);
        let x = 0.7;
        let e = 1e-4;
        let fd = (free_streaming_closed_form(&d, x + e, t, 0) - free_streaming_closed_form(&d, x - e, t, 0)) / (2.0 * e);
        assert!((free_streaming_closed_form(&d, x, t, 1) - fd).abs() < 1e-9);
    }

    #[test]
    fn single_norm_matches_two_dimensional() {
        let d = InitialData::gaussian(1.0, 1.0).unwrap();
        for n in 0..=4 {
            let a = directional_norm(&d, n, 1e-10).unwrap().value;
            let b = directional_norm_single(&d.components[0], n, 1e-12).unwrap();
            assert!((a - b).abs() < 1e-8 * b, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn window_contains_support() {
        let d = InitialData::gaussian(1.0, 1.0).unwrap();
        let (lo, hi) = d.streaming_window(3.0, 2.0, 0.0).unwrap();
        for i in 0..=200 {
            let x0 = -30.0 + 0.3 * i as f64;
            if x0 < lo || x0 > hi {
                assert!(d.f0_tilde(x0, (3.0 - x0) / 3.0) < 1e-17);
            }
        }
    }
}
