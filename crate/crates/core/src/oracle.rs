//! Independent phase-space solver: Strang-split semi-Lagrangian advection with
//! periodic cubic B-splines, and a compact fourth-order potential solve.
//! Nothing here uses the characteristic or convolution machinery.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::picard::{DensityHistory, RunConfig};
use crate::transport::{DensitySlice, InitialData};

/// Relative mass allowed in the outermost velocity rows.
pub const LEAK_THRESHOLD: f64 = 1e-6;

/// f on the x grid of a GridFunction (the last node is the periodic image of
/// the first) times a periodic v grid vⱼ = −v_max + j·dv.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceFunction {
    half_width: f64,
    /// Grid points of the matching GridFunction; nx − 1 are stored.
    nx: usize,
    v_max: f64,
    nv: usize,
    /// values[j·(nx−1) + i] = f(xᵢ, vⱼ).
    values: Vec<f64>,
}

impl PhaseSpaceFunction {
    pub fn from_fn(half_width: f64, nx: usize, v_max: f64, nv: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        if nx < 8 || nv < 16 || !(half_width > 0.0) || !(v_max > 0.0) {
            return Err(Error::Grid(format!("phase-space grid {nx}×{nv} on L = {half_width}, v_max = {v_max}")));
        }
        let mut out = Self { half_width, nx, v_max, nv, values: vec![0.0; (nx - 1) * nv] };
        let (hx, dv) = (out.dx(), out.dv());
        out.values.par_chunks_mut(nx - 1).enumerate().for_each(|(j, row)| {
            let v = -v_max + j as f64 * dv;
            for (i, r) in row.iter_mut().enumerate() {
                *r = f(-half_width + i as f64 * hx, v);
            }
        });
        if out.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InitialData("non-finite phase-space value".into()));
        }
        Ok(out)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.nx - 1) as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.nv as f64
    }

    pub fn v(&self, j: usize) -> f64 {
        -self.v_max + j as f64 * self.dv()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.nx - 1) + i % (self.nx - 1)]
    }

    /// ρ = Σⱼ f(·, vⱼ)dv on the GridFunction grid.
    pub fn density(&self) -> Result<GridFunction> {
        let m = self.nx - 1;
        let mut rho = vec![0.0; self.nx];
        for row in self.values.chunks(m) {
            for (r, &f) in rho.iter_mut().zip(row) {
                *r += f;
            }
        }
        let dv = self.dv();
        rho.iter_mut().for_each(|r| *r *= dv);
        rho[m] = rho[0];
        GridFunction::new(self.half_width, rho)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx() * self.dv()
    }

    /// Most negative value relative to the maximum.
    pub fn undershoot(&self) -> f64 {
        let max = self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let min = self.values.iter().fold(0.0f64, |m, &v| m.min(v));
        if max == 0.0 {
            0.0
        } else {
            -min / max
        }
    }

    /// Mass in the two outermost velocity rows on each side, relative to the total.
    pub fn boundary_leak(&self) -> f64 {
        let m = self.nx - 1;
        let total: f64 = self.values.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let rows = [0, 1, self.nv - 2, self.nv - 1];
        rows.iter().map(|&j| self.values[j * m..(j + 1) * m].iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>() / total
    }

    fn advect_x(&mut self, dt: f64) {
        let (m, hx, v_max, dv) = (self.nx - 1, self.dx(), self.v_max, self.dv());
        self.values.par_chunks_mut(m).enumerate().for_each_init(
            || (vec![0.0; m], vec![0.0; m]),
            |(coef, scratch), (j, row)| {
                let v = -v_max + j as f64 * dv;
                shift_periodic(row, v * dt / hx, coef, scratch);
            },
        );
    }

    fn advect_v(&mut self, accel: &[f64], dt: f64) {
        let (m, nv, dv) = (self.nx - 1, self.nv, self.dv());
        let mut columns: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map_init(
                || (vec![0.0; nv], vec![0.0; nv]),
                |(coef, scratch), i| {
                    let mut col: Vec<f64> = (0..nv).map(|j| self.values[j * m + i]).collect();
                    shift_periodic(&mut col, accel[i] * dt / dv, coef, scratch);
                    col
                },
            )
            .collect();
        for (i, col) in columns.iter_mut().enumerate() {
            for (j, &c) in col.iter().enumerate() {
                self.values[j * m + i] = c;
            }
        }
    }
}

/// In place f[k] ← s(k − shift), s the periodic cubic B-spline interpolant of f.
pub fn shift_periodic(f: &mut [f64], shift: f64, coef: &mut Vec<f64>, scratch: &mut Vec<f64>) {
    let n = f.len();
    if shift == 0.0 {
        return;
    }
    bspline_coefficients(f, coef, scratch);
    let fl = shift.floor();
    let theta = shift - fl;
    let m = (fl as i64).rem_euclid(n as i64) as usize;
    // spline at k − m − θ uses coefficients k−m−2 … k−m+1
    let w = [bspline(2.0 - theta), bspline(1.0 - theta), bspline(theta), bspline(1.0 + theta)];
    for (k, out) in f.iter_mut().enumerate() {
        let base = k + 2 * n - m;
        *out = w[0] * coef[(base - 2) % n] + w[1] * coef[(base - 1) % n] + w[2] * coef[base % n] + w[3] * coef[(base + 1) % n];
    }
}

/// Centred cubic B-spline.
pub fn bspline(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Coefficients c with (c[k−1] + 4c[k] + c[k+1])/6 = f[k], periodically, by
/// the causal/anticausal recursive filter with pole √3 − 2.
pub fn bspline_coefficients(f: &[f64], coef: &mut Vec<f64>, scratch: &mut Vec<f64>) {
    let n = f.len();
    let z = 3f64.sqrt() - 2.0;
    let terms = n.min(64);
    let zn = 1.0 - z.powi(n as i32);
    scratch.resize(n, 0.0);
    coef.resize(n, 0.0);
    let mut init = 0.0;
    let mut zk = 1.0;
    for j in 0..terms {
        init += zk * f[(n - j) % n];
        zk *= z;
    }
    scratch[0] = init / zn;
    for k in 1..n {
        scratch[k] = f[k] + z * scratch[k - 1];
    }
    let mut init = 0.0;
    let mut zk = z;
    for j in 0..terms {
        init += zk * scratch[(n - 1 + j) % n];
        zk *= z;
    }
    coef[n - 1] = -init / zn;
    for k in (0..n - 1).rev() {
        coef[k] = z * (coef[k + 1] - scratch[k]);
    }
    coef.iter_mut().for_each(|c| *c *= 6.0);
}

/// φ with (1 − ∂ₓ²)φ = ρ by the Numerov scheme, φ = 0 at ±L.
pub fn numerov_potential(rho: &GridFunction) -> Vec<f64> {
    let n = rho.len();
    let h = rho.spacing();
    let r = rho.values();
    let c = h * h / 12.0;
    let off = 1.0 - c;
    let diag = -(2.0 + 10.0 * c);
    let m = n - 2;
    let rhs: Vec<f64> = (1..n - 1).map(|i| -c * (r[i - 1] + 10.0 * r[i] + r[i + 1])).collect();
    // Thomas algorithm for the constant tridiagonal system
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    cp[0] = off / diag;
    dp[0] = rhs[0] / diag;
    for i in 1..m {
        let den = diag - off * cp[i - 1];
        cp[i] = off / den;
        dp[i] = (rhs[i] - off * dp[i - 1]) / den;
    }
    let mut phi = vec![0.0; n];
    phi[m] = dp[m - 1];
    for i in (0..m - 1).rev() {
        phi[i + 1] = dp[i] - cp[i] * phi[i + 2];
    }
    phi
}

/// ∂ₓφ by fourth-order central differences (second order next to the ends).
pub fn force_from_potential(phi: &[f64], h: f64) -> Vec<f64> {
    let n = phi.len();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (-phi[i + 2] + 8.0 * phi[i + 1] - 8.0 * phi[i - 1] + phi[i - 2]) / (12.0 * h)
            } else if i >= 1 && i + 1 < n {
                (phi[i + 1] - phi[i - 1]) / (2.0 * h)
            } else {
                0.0
            }
        })
        .collect()
}

/// One Strang step: half x-advection, field, full v-advection, half x-advection.
/// With `zero_field` the v-advection is skipped.
pub fn step(f: &mut PhaseSpaceFunction, dt: f64, q: f64, zero_field: bool) -> Result<()> {
    f.advect_x(0.5 * dt);
    if !zero_field {
        let rho = f.density()?;
        let phi = numerov_potential(&rho);
        let force = force_from_potential(&phi, rho.spacing());
        // f(v) ← f(v + q∂ₓφ dt): a shift of −q∂ₓφ·dt
        let accel: Vec<f64> = force.iter().take(f.nx - 1).map(|e| -q * e).collect();
        f.advect_v(&accel, dt);
    }
    f.advect_x(0.5 * dt);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub nv: usize,
    pub dt: f64,
    /// v_max in thermal widths 1/√(2a) of the narrowest component.
    pub vmax_widths: f64,
    pub zero_field: bool,
}

impl OracleOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self { nv: cfg.oracle_nv, dt: cfg.oracle_dt, vmax_widths: cfg.oracle_vmax, zero_field: false }
    }
}

/// The ρ history of the oracle with its conservation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub history: DensityHistory,
    pub initial_mass: f64,
    pub mass_drift: f64,
    pub undershoot: f64,
    pub steps: usize,
}

/// Evolves f₀ through the time nodes, taking equal steps of at most dt between them.
#[allow(clippy::too_many_arguments)]
pub fn run_oracle(
    data: &InitialData,
    q: f64,
    half_width: f64,
    nx: usize,
    nodes: &[f64],
    n_max: usize,
    opts: &OracleOptions,
) -> Result<OracleRun> {
    if nodes.is_empty() || nodes[0] != 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("oracle time nodes must start at 0 and increase".into()));
    }
    let v_max = if data.is_zero() { 1.0 } else { opts.vmax_widths / (2.0 * data.min_rate()).sqrt() };
    let centre = data.components.iter().map(|c| c.vc.abs()).fold(0.0, f64::max);
    let mut f = PhaseSpaceFunction::from_fn(half_width, nx, v_max + centre, opts.nv, |x, v| data.f0(x, v))?;
    let initial_mass = f.mass();
    let mut slices = vec![DensitySlice::new(0.0, f.density()?, n_max)?];
    let mut steps = 0;
    let mut undershoot: f64 = 0.0;
    for w in nodes.windows(2) {
        let count = ((w[1] - w[0]) / opts.dt).ceil().max(1.0) as usize;
        let dt = (w[1] - w[0]) / count as f64;
        for _ in 0..count {
            step(&mut f, dt, q, opts.zero_field)?;
            steps += 1;
        }
        undershoot = undershoot.max(f.undershoot());
        let leak = f.boundary_leak();
        if leak > LEAK_THRESHOLD {
            return Err(Error::Integration(format!("velocity boundary holds {leak:.3e} of the mass at t = {}", w[1])));
        }
        slices.push(DensitySlice::new(w[1], f.density()?, n_max)?);
    }
    let mass_drift = if initial_mass == 0.0 { 0.0 } else { ((f.mass() - initial_mass) / initial_mass).abs() };
    let history = DensityHistory::from_slices(0, slices)?;
    Ok(OracleRun { history, initial_mass, mass_drift, undershoot, steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub sup_error: f64,
    /// sup error over sup|ρ_picard|.
    pub relative_error: f64,
    pub d1_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub rows: Vec<ComparisonRow>,
    pub max_error: f64,
    pub max_relative_error: f64,
    pub mass_drift: f64,
    pub undershoot: f64,
    pub steps: usize,
}

pub fn compare(oracle: &OracleRun, picard: &DensityHistory) -> Result<OracleComparison> {
    if oracle.history.nodes.len() != picard.nodes.len()
        || oracle.history.nodes.iter().zip(&picard.nodes).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b))
    {
        return Err(Error::Grid("oracle and Picard histories use different time grids".into()));
    }
    let mut rows = vec![];
    for (o, p) in oracle.history.slices.iter().zip(&picard.slices) {
        let sup_error = o.rho().sup_distance(p.rho())?;
        let scale = p.rho().sup_norm();
        let d1_error = match (o.derivatives.get(1), p.derivatives.get(1)) {
            (Some(a), Some(b)) => a.sup_distance(b)?,
            _ => f64::NAN,
        };
        rows.push(ComparisonRow {
            t: p.t,
            sup_error,
            relative_error: if scale > 0.0 { sup_error / scale } else { sup_error },
            d1_error,
        });
    }
    Ok(OracleComparison {
        max_error: rows.iter().map(|r| r.sup_error).fold(0.0, f64::max),
        max_relative_error: rows.iter().map(|r| r.relative_error).fold(0.0, f64::max),
        rows,
        mass_drift: oracle.mass_drift,
        undershoot: oracle.undershoot,
        steps: oracle.steps,
    })
}

/// Runs the oracle on the Picard time grid and compares.
pub fn run_and_compare(cfg: &RunConfig, data: &InitialData, picard: &DensityHistory) -> Result<(OracleRun, OracleComparison)> {
    let oracle = run_oracle(
        data,
        cfg.q,
        picard.half_width(),
        picard.grid_len(),
        &picard.nodes,
        picard.slices[0].n_max(),
        &OracleOptions::from_config(cfg),
    )?;
    let cmp = compare(&oracle, picard)?;
    Ok((oracle, cmp))
}

pub fn write_comparison_csv<W: std::io::Write>(cmp: &OracleComparison, mut w: W) -> Result<()> {
    writeln!(w, "t,sup_error,relative_error,d1_error")?;
    for r in &cmp.rows {
        writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e}", r.t, r.sup_error, r.relative_error, r.d1_error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefilter_interpolates() {
        let f: Vec<f64> = (0..40).map(|k| (k as f64 * 0.3).sin() + 0.1 * k as f64 % 1.7).collect();
        let (mut c, mut s) = (vec![], vec![]);
        bspline_coefficients(&f, &mut c, &mut s);
        for k in 0..40 {
            let back = (c[(k + 39) % 40] + 4.0 * c[k] + c[(k + 1) % 40]) / 6.0;
            assert!((back - f[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn integer_shift_is_exact_and_mass_is_kept() {
        let f0: Vec<f64> = (0..32).map(|k| (-((k as f64 - 10.0) / 3.0).powi(2)).exp()).collect();
        let (mut c, mut s) = (vec![], vec![]);
        let mut f = f0.clone();
        shift_periodic(&mut f, 5.0, &mut c, &mut s);
        for k in 0..32 {
            assert!((f[k] - f0[(k + 27) % 32]).abs() < 1e-13);
        }
        let mut g = f0.clone();
        shift_periodic(&mut g, 2.37, &mut c, &mut s);
        assert!((g.iter().sum::<f64>() - f0.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn numerov_manufactured() {
        let rho = GridFunction::from_fn(20.0, 801, |x| (3.0 - 4.0 * x * x) * (-x * x).exp()).unwrap();
        let phi = numerov_potential(&rho);
        let worst = (0..801).map(|i| (phi[i] - (-rho.x(i).powi(2)).exp()).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }
}
