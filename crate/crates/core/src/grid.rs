//! Uniform grids on [−L, L]: grid functions, finite differences, interpolation.

use std::io::{BufRead, Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};

/// Highest derivative order accepted by [`spatial_derivative`].
pub const MAX_FD_ORDER: usize = 8;

/// Interpolation stencil width in x.
pub const STENCIL: usize = 8;

/// Values of a scalar field at xᵢ = −L + i·2L/(N−1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    half_width: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(half_width: f64, values: Vec<f64>) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Grid(format!("half width must be positive, got {half_width}")));
        }
        if values.len() < STENCIL {
            return Err(Error::Grid(format!("need at least {STENCIL} nodes, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at node {i}")));
        }
        Ok(Self { half_width, values })
    }

    pub fn zeros(half_width: f64, n: usize) -> Result<Self> {
        Self::new(half_width, vec![0.0; n])
    }

    pub fn from_fn(half_width: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        if n < STENCIL {
            return Err(Error::Grid(format!("need at least {STENCIL} nodes, got {n}")));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        Self::new(half_width, (0..n).map(|i| f(-half_width + i as f64 * h)).collect())
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Grid(format!("expected {} values, got {}", self.len(), values.len())));
        }
        Self::new(self.half_width, values)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.values.len() - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.len() == other.len() && self.half_width == other.half_width
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup norm of the difference; the grids must agree.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Grid(format!(
                "grid mismatch: (L={}, N={}) vs (L={}, N={})",
                self.half_width,
                self.len(),
                other.half_width,
                other.len()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { half_width: self.half_width, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// a·self + other.
    pub fn axpy(&self, a: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + y).collect();
        Ok(GridFunction { half_width: self.half_width, values })
    }

    /// Trapezoid sum; spectrally accurate for data decaying at both ends.
    pub fn integral(&self) -> f64 {
        let n = self.len();
        let inner: f64 = self.values[1..n - 1].iter().sum();
        self.spacing() * (inner + 0.5 * (self.values[0] + self.values[n - 1]))
    }

    /// Eight-point Lagrange interpolation.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        let st = LagrangeStencil::new(self.half_width, self.len(), x)?;
        Ok(st.apply(&self.values))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e}", self.x(i), v)?;
        }
        Ok(())
    }

    /// Binary slice: L as f64, N as u64, then N values, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.half_width.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let half_width = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        if n > 1 << 28 {
            return Err(Error::Parse(format!("implausible node count {n}")));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Self::new(half_width, values)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: missing column", lineno + 1)))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            xs.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
        }
        let half_width = xs.last().copied().unwrap_or(0.0);
        Self::new(half_width, values)
    }
}

/// Lagrange weights on eight consecutive grid nodes around a point.
#[derive(Debug, Clone, Copy)]
pub struct LagrangeStencil {
    pub start: usize,
    pub weights: [f64; STENCIL],
}

const fn lagrange_denominators() -> [f64; STENCIL] {
    // 1/Π_{k≠j}(j−k) = (−1)^{7−j}/(j!(7−j)!)
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];
    let mut out = [0.0; STENCIL];
    let mut j = 0;
    while j < STENCIL {
        let sign = if (STENCIL - 1 - j) % 2 == 0 { 1.0 } else { -1.0 };
        out[j] = sign / (fact[j] * fact[STENCIL - 1 - j]);
        j += 1;
    }
    out
}

const LAGRANGE_DEN: [f64; STENCIL] = lagrange_denominators();

impl LagrangeStencil {
    pub fn new(half_width: f64, n: usize, x: f64) -> Result<Self> {
        if !(x >= -half_width && x <= half_width) {
            return Err(Error::OutOfDomain { s: f64::NAN, x });
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let xi = (x + half_width) / h;
        let cell = (xi.floor() as usize).min(n - 2);
        let start = cell.saturating_sub(STENCIL / 2 - 1).min(n - STENCIL);
        Ok(Self { start, weights: lagrange_weights(xi - start as f64) })
    }

    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        let v = &values[self.start..self.start + STENCIL];
        let mut acc = 0.0;
        for j in 0..STENCIL {
            acc += self.weights[j] * v[j];
        }
        acc
    }
}

/// ℓⱼ(ξ) for nodes 0..8 by prefix/suffix products.
#[inline]
pub fn lagrange_weights(xi: f64) -> [f64; STENCIL] {
    let mut prefix = [1.0; STENCIL];
    let mut suffix = [1.0; STENCIL];
    for j in 1..STENCIL {
        prefix[j] = prefix[j - 1] * (xi - (j - 1) as f64);
    }
    for j in (0..STENCIL - 1).rev() {
        suffix[j] = suffix[j + 1] * (xi - (j + 1) as f64);
    }
    let mut w = [0.0; STENCIL];
    for j in 0..STENCIL {
        w[j] = LAGRANGE_DEN[j] * prefix[j] * suffix[j];
    }
    w
}

/// Fornberg's finite-difference weights: `c[m][j]` approximates the m-th
/// derivative at `z` from values at `xs[j]`.
pub fn fornberg_weights(z: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// n-th derivative by order-8 finite differences: centered in the interior,
/// one-sided with n+8 points near the ends.
pub fn spatial_derivative(g: &GridFunction, n: usize) -> Result<GridFunction> {
    if n > MAX_FD_ORDER {
        return Err(Error::OrderTooLarge { order: n, max: MAX_FD_ORDER });
    }
    if n == 0 {
        return Ok(g.clone());
    }
    let len = g.len();
    let r = (n + 7) / 2;
    let side = n + 8;
    if len < side.max(2 * r + 1) {
        return Err(Error::Grid(format!("{len} nodes too few for a derivative of order {n}")));
    }
    let scale = g.spacing().powi(-(n as i32));
    let offsets: Vec<f64> = (0..=2 * r).map(|j| j as f64 - r as f64).collect();
    let center = fornberg_weights(0.0, &offsets, n).swap_remove(n);
    let window: Vec<f64> = (0..side).map(|j| j as f64).collect();
    let v = g.values();
    let mut out = vec![0.0; len];
    for i in 0..len {
        if i >= r && i + r < len {
            let s = &v[i - r..=i + r];
            out[i] = scale * center.iter().zip(s).map(|(c, y)| c * y).sum::<f64>();
        } else {
            let start = if i < r { 0 } else { len - side };
            let w = fornberg_weights((i - start) as f64, &window, n).swap_remove(n);
            let s = &v[start..start + side];
            out[i] = scale * w.iter().zip(s).map(|(c, y)| c * y).sum::<f64>();
        }
    }
    g.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let c = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(c[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(c[2], vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn derivative_exact_on_polynomials() {
        let g = GridFunction::from_fn(2.0, 41, |x| 1.0 + x - 0.5 * x.powi(3) + 0.1 * x.powi(6)).unwrap();
        let d1 = spatial_derivative(&g, 1).unwrap();
        let d3 = spatial_derivative(&g, 3).unwrap();
        for i in 0..g.len() {
            let x: f64 = g.x(i);
            let e1 = 1.0 - 1.5 * x * x + 0.6 * x.powi(5);
            let e3: f64 = -3.0 + 12.0 * x.powi(3);
            assert!((d1.values()[i] - e1).abs() < 1e-9, "i={i}");
            assert!((d3.values()[i] - e3).abs() < 1e-6, "i={i}");
        }
    }

    #[test]
    fn constant_has_zero_derivative() {
        let g = GridFunction::from_fn(1.0, 20, |_| 3.0).unwrap();
        assert!(spatial_derivative(&g, 1).unwrap().sup_norm() < 1e-10);
        assert!(spatial_derivative(&g, 9).is_err());
    }

    #[test]
    fn lagrange_reproduces_nodes_and_septics() {
        let g = GridFunction::from_fn(3.0, 25, |x| x.powi(7) - 2.0 * x).unwrap();
        for i in 0..g.len() {
            assert!((g.interpolate(g.x(i)).unwrap() - g.values()[i]).abs() < 1e-12);
        }
        for &x in &[-2.99f64, -1.234, 0.0, 0.77, 2.999] {
            let exact = x.powi(7) - 2.0 * x;
            assert!((g.interpolate(x).unwrap() - exact).abs() < 1e-10, "x={x}");
        }
        assert!(g.interpolate(3.1).is_err());
    }

    #[test]
    fn binary_roundtrip() {
        let g = GridFunction::from_fn(5.0, 16, |x| (-x * x).exp()).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 16 * 8);
        assert_eq!(GridFunction::read_binary(&buf[..]).unwrap(), g);
    }

    #[test]
    fn rejects_small_or_invalid_grids() {
        assert!(GridFunction::new(1.0, vec![0.0; 7]).is_err());
        assert!(GridFunction::new(0.0, vec![0.0; 8]).is_err());
        assert!(GridFunction::new(1.0, vec![f64::NAN; 8]).is_err());
    }
}
