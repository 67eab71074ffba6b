//! Characteristic boundary value problems and their derivative ladders.
//!
//! A trajectory solves X″ = −q(∂ₓφ)(X, s) on [0, t] with X(t) = x and
//! X(0) − V(0) = x₀. It is shot from v₀ = V(0) while carrying the two
//! variations u = ∂X/∂v₀ (u(0) = u′(0) = 1) and z = ∂X/∂x₀ at fixed v₀
//! (z(0) = 1, z′(0) = 0). At the solution ∂ₓX = u/u(t) and
//! ∂ₓ₀X = z − u·z(t)/u(t).

use std::sync::Arc;

use serde::Serialize;

use crate::combinatorics::{binomial_f64, factorial_f64, FaaDiBrunoTable};
use crate::comparison_ode::{forced_on, y1_on, y2_on, FundamentalSystem, LinearBvpSolution};
use crate::error::{Error, Result};
use crate::ode::{integrate, DenseSolution, Options, StepMode};
use crate::quadrature::GaussLegendre;
use crate::screened_field::FieldHistory;
use crate::weights::{damping, gamma, phi};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub bvp_tol: f64,
    pub max_iter: usize,
    pub step: StepMode,
    /// Accept a converging Newton step of at most this size by linearizing the
    /// end state instead of integrating again. Only used without recording.
    pub linear_accept: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { bvp_tol: 1e-10, max_iter: 25, step: StepMode::Fixed { substeps: 2 }, linear_accept: 0.0 }
    }
}

pub fn check_charge(q: f64) -> Result<()> {
    if q == 1.0 || q == -1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("q must be +1 or -1, got {q}")))
    }
}

#[derive(Debug, Clone)]
enum Path {
    /// Zero field: X = x₀ + v₀(1+s), u = 1+s, z = 1.
    Free,
    Dense(Arc<DenseSolution<6>>),
    /// t = 0, or a solve without recorded output.
    Endpoints,
}

/// One converged characteristic.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: f64,
    pub x0: f64,
    pub t: f64,
    pub q: f64,
    pub v0: f64,
    pub residual: f64,
    pub iterations: usize,
    /// The last Newton step was applied to the end state to first order.
    pub linearized: bool,
    /// [X, V, u, u′, z, z′] at s = t.
    pub end: [f64; 6],
    path: Path,
}

impl Trajectory {
    /// [X, V, u, u′, z, z′] at s.
    pub fn state(&self, s: f64) -> Result<[f64; 6]> {
        match &self.path {
            Path::Free => Ok([self.x0 + self.v0 * (1.0 + s), self.v0, 1.0 + s, 1.0, 1.0, 0.0]),
            Path::Dense(d) => Ok(if s >= self.t { self.end } else { d.eval(s) }),
            Path::Endpoints if s == self.t => Ok(self.end),
            Path::Endpoints if s == 0.0 => Ok([self.x0 + self.v0, self.v0, 1.0, 1.0, 1.0, 0.0]),
            Path::Endpoints => Err(Error::InvalidArgument("trajectory was solved without recording".into())),
        }
    }

    pub fn is_recorded(&self) -> bool {
        !matches!(self.path, Path::Endpoints) || self.t == 0.0
    }

    /// w = V(t).
    pub fn w(&self) -> f64 {
        self.end[1]
    }

    /// w₀ = V(0).
    pub fn w0(&self) -> f64 {
        self.v0
    }

    /// ∂ₓw₀ = 1/u(t).
    pub fn dx_w0(&self) -> f64 {
        1.0 / self.end[2]
    }

    /// ∂ₓ₀w₀ = −z(t)/u(t).
    pub fn dx0_w0(&self) -> f64 {
        -self.end[4] / self.end[2]
    }

    /// ∂ₓ₀w = z′(t) − u′(t)z(t)/u(t).
    pub fn dx0_w(&self) -> f64 {
        self.end[5] - self.end[3] * self.end[4] / self.end[2]
    }

    /// ∂ₓX(s) = u(s)/u(t).
    pub fn dx_x(&self, s: f64) -> Result<f64> {
        Ok(self.state(s)?[2] / self.end[2])
    }

    /// ∂ₓ₀X(s) = z(s) − u(s)z(t)/u(t).
    pub fn dx0_x(&self, s: f64) -> Result<f64> {
        let st = self.state(s)?;
        Ok(st[4] - st[2] * self.end[4] / self.end[2])
    }

    /// (s, X, V) at `count`+1 uniform times.
    pub fn samples(&self, count: usize) -> Result<Vec<(f64, f64, f64)>> {
        (0..=count)
            .map(|i| {
                let s = self.t * i as f64 / count.max(1) as f64;
                let st = self.state(s)?;
                Ok((s, st[0], st[1]))
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, count: usize) -> Result<()> {
        writeln!(w, "s,X,V")?;
        for (s, x, v) in self.samples(count)? {
            writeln!(w, "{s:.17e},{x:.17e},{v:.17e}")?;
        }
        Ok(())
    }
}

/// Integration breakpoints: the history nodes inside (0, t) plus both ends.
pub fn breakpoints(hist: &FieldHistory, t: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    b.extend(hist.nodes().iter().copied().filter(|&s| s > 0.0 && s < t * (1.0 - 1e-14)));
    b.push(t);
    b
}

fn check_span(hist: &FieldHistory, t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    if hist.start() > 0.0 || hist.end() < t * (1.0 - 1e-14) {
        return Err(Error::HistoryGap { s: t, reason: format!("history covers [{}, {}]", hist.start(), hist.end()) });
    }
    Ok(())
}

/// Solves the boundary value problem from the free-streaming guess.
pub fn solve_bvp(x: f64, x0: f64, t: f64, hist: &FieldHistory, q: f64, opts: &ShootingOptions) -> Result<Trajectory> {
    solve_bvp_from(x, x0, t, hist, q, opts, (x - x0) / (1.0 + t), true)
}

/// Newton shooting on v₀ from `guess`; `record` keeps the dense path.
#[allow(clippy::too_many_arguments)]
pub fn solve_bvp_from(
    x: f64,
    x0: f64,
    t: f64,
    hist: &FieldHistory,
    q: f64,
    opts: &ShootingOptions,
    guess: f64,
    record: bool,
) -> Result<Trajectory> {
    check_charge(q)?;
    check_span(hist, t)?;
    if t == 0.0 {
        let v0 = x - x0;
        return Ok(Trajectory {
            x,
            x0,
            t,
            q,
            v0,
            residual: 0.0,
            iterations: 0,
            linearized: false,
            end: [x, v0, 1.0, 1.0, 1.0, 0.0],
            path: Path::Endpoints,
        });
    }
    if hist.is_zero() {
        let v0 = (x - x0) / (1.0 + t);
        let end = [x0 + v0 * (1.0 + t), v0, 1.0 + t, 1.0, 1.0, 0.0];
        return Ok(Trajectory { x, x0, t, q, v0, residual: (end[0] - x).abs(), iterations: 0, linearized: false, end, path: Path::Free });
    }
    let breaks = breakpoints(hist, t);
    let ode_opts = Options { mode: opts.step, max_steps: 100_000, record };
    let rhs = |s: f64, y: &[f64; 6]| -> Result<[f64; 6]> {
        let mut f = [0.0; 2];
        hist.eval_into(y[0], s, 1, &mut f)?;
        let h = -q * f[1];
        Ok([y[1], -q * f[0], y[3], h * y[2], y[5], h * y[4]])
    };
    let mut v0 = guess;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (end, dense) = integrate(rhs, &breaks, [x0 + v0, v0, 1.0, 1.0, 1.0, 0.0], &ode_opts)?;
        residual = end[0] - x;
        if residual.abs() <= opts.bvp_tol {
            let path = match dense {
                Some(d) => Path::Dense(Arc::new(d)),
                None => Path::Endpoints,
            };
            return Ok(Trajectory { x, x0, t, q, v0, residual: residual.abs(), iterations: it, linearized: false, end, path });
        }
        if !(end[2] > 0.0) {
            return Err(Error::Integration(format!(
                "shooting derivative {} is not positive at x = {x}, x0 = {x0}, t = {t}; \
                 the boundary value problem may have several solutions",
                end[2]
            )));
        }
        let step = -residual / end[2];
        if !record && step.abs() <= opts.linear_accept {
            let mut end = end;
            end[0] = x;
            end[1] += end[3] * step;
            return Ok(Trajectory {
                x,
                x0,
                t,
                q,
                v0: v0 + step,
                residual: residual.abs(),
                iterations: it,
                linearized: true,
                end,
                path: Path::Endpoints,
            });
        }
        v0 += step;
    }
    Err(Error::NewtonNonConvergence { x, x0, t, residual: residual.abs() })
}

/// (w, w₀).
pub fn w_pair(traj: &Trajectory) -> (f64, f64) {
    (traj.w(), traj.w0())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variation {
    X,
    X0,
}

/// Options for the ladder solves.
pub fn ladder_options() -> Options {
    Options::adaptive(1e-13, 1e-18)
}

/// Derivatives of a trajectory with respect to x (and one x₀), order by order.
pub struct Ladder<'a> {
    traj: &'a Trajectory,
    hist: &'a FieldHistory,
    base: Arc<FundamentalSystem>,
    y1t: f64,
    x_orders: Vec<LinearBvpSolution>,
    x_tables: Vec<FaaDiBrunoTable>,
    mixed: Vec<LinearBvpSolution>,
    mixed_tables: Vec<FaaDiBrunoTable>,
    breaks: Vec<f64>,
    opts: Options,
}

impl<'a> Ladder<'a> {
    /// Builds the fundamental system of h(s) = −q(∂ₓ²φ)(X(s), s).
    pub fn new(traj: &'a Trajectory, hist: &'a FieldHistory) -> Result<Self> {
        if traj.t <= 0.0 {
            return Err(Error::InvalidTime(traj.t));
        }
        if !traj.is_recorded() {
            return Err(Error::InvalidArgument("ladder needs a recorded trajectory".into()));
        }
        let breaks = breakpoints(hist, traj.t);
        let opts = ladder_options();
        let h = |s: f64| -> f64 {
            match traj.state(s) {
                Ok(st) => hist.eval(2, st[0], s).map(|v| -traj.q * v).unwrap_or(f64::NAN),
                Err(_) => f64::NAN,
            }
        };
        let lt = traj.t.ln_1p();
        let admissibility = (0..=200)
            .map(|i| {
                let s = ((lt * i as f64 / 200.0).exp() - 1.0).min(traj.t);
                h(s).abs() / damping(s)
            })
            .fold(0.0, f64::max);
        let base = Arc::new(FundamentalSystem::from_rule(h, traj.t, admissibility, &opts, &breaks[1..])?);
        let y1t = base.y1(traj.t).0;
        let mixed0 = y2_on(base.clone());
        Ok(Self {
            traj,
            hist,
            base,
            y1t,
            x_orders: vec![],
            x_tables: vec![],
            mixed: vec![mixed0],
            mixed_tables: vec![],
            breaks,
            opts,
        })
    }

    pub fn admissibility(&self) -> f64 {
        self.base.admissibility
    }

    pub fn system(&self) -> &FundamentalSystem {
        &self.base
    }

    /// Highest x-order available (1 is always present).
    pub fn x_order(&self) -> usize {
        self.x_orders.len() + 1
    }

    /// Highest mixed order available (0 is always present).
    pub fn mixed_order(&self) -> usize {
        self.mixed.len() - 1
    }

    /// First variation as a boundary value solution: ∂ₓX is y₁ scaled to
    /// y(t) = 1 and ∂ₓ₀X is y₂.
    pub fn variational_first(&self, which: Variation) -> LinearBvpSolution {
        match which {
            Variation::X => y1_on(self.base.clone(), 1.0 / self.y1t),
            Variation::X0 => self.mixed[0].clone(),
        }
    }

    /// ∂ₓⁿX(s) for 1 ≤ n ≤ x_order.
    pub fn dx_x(&self, n: usize, s: f64) -> Result<f64> {
        match n {
            0 => Ok(self.traj.state(s)?[0]),
            1 => Ok(self.base.y1(s).0 / self.y1t),
            _ => Ok(self.x_orders.get(n - 2).ok_or(Error::MissingOrder(n))?.eval(s).0),
        }
    }

    /// ∂ₓⁿV(s).
    pub fn dx_v(&self, n: usize, s: f64) -> Result<f64> {
        match n {
            0 => Ok(self.traj.state(s)?[1]),
            1 => Ok(self.base.y1(s).1 / self.y1t),
            _ => Ok(self.x_orders.get(n - 2).ok_or(Error::MissingOrder(n))?.eval(s).1),
        }
    }

    /// ∂ₓⁿ∂ₓ₀X(s).
    pub fn dx_mixed(&self, n: usize, s: f64) -> Result<f64> {
        Ok(self.mixed.get(n).ok_or(Error::MissingOrder(n))?.eval(s).0)
    }

    /// ∂ₓⁿw₀ = ∂ₓⁿV(0).
    pub fn dxn_w0(&self, n: usize) -> Result<f64> {
        self.dx_v(n, 0.0)
    }

    /// ∂ₓⁿw = ∂ₓⁿV(t).
    pub fn dxn_w(&self, n: usize) -> Result<f64> {
        self.dx_v(n, self.traj.t)
    }

    /// ∂ₓⁿ∂ₓ₀w = ∂ₓⁿ∂ₓ₀V(t).
    pub fn dxn_dx0_w(&self, n: usize) -> Result<f64> {
        Ok(self.mixed.get(n).ok_or(Error::MissingOrder(n))?.eval(self.traj.t).1)
    }

    fn field_along(&self, s: f64, lo: usize, out: &mut [f64]) -> f64 {
        match self.traj.state(s).and_then(|st| self.hist.eval_into(st[0], s, lo, out)) {
            Ok(()) => 0.0,
            Err(_) => f64::NAN,
        }
    }

    /// Adds ∂ₓⁿX, n ≥ 2, from the restricted Faà di Bruno forcing.
    pub fn ladder_x(&mut self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::InvalidArgument("x-ladder orders start at 2".into()));
        }
        if n != self.x_order() + 1 {
            return Err(Error::MissingOrder(if n > self.x_order() { n - 1 } else { n }));
        }
        if n + 1 > self.hist.max_order() {
            return Err(Error::MissingOrder(n + 1));
        }
        let table = FaaDiBrunoTable::new(n as u32, true)?;
        let q = self.traj.q;
        let sol = {
            let this = &*self;
            let forcing = |s: f64| -> f64 {
                // outer[k] = ∂₁ᵏ⁺¹φ(X, s) for k = 0..=n
                let mut outer = vec![0.0; n + 1];
                let nan = this.field_along(s, 1, &mut outer);
                let mut inner = vec![0.0; n + 1];
                for (j, v) in inner.iter_mut().enumerate().take(n).skip(1) {
                    *v = this.dx_x(j, s).unwrap_or(f64::NAN);
                }
                -q * table.apply(&outer, &inner) + nan
            };
            forced_on(self.base.clone(), forcing, &self.opts, &self.breaks[1..])?
        };
        self.x_orders.push(sol);
        self.x_tables.push(table);
        Ok(())
    }

    /// ∂ₓᵏ[(∂₁²φ)(X(s), s)] for k = 0..=n.
    fn composed_second(&self, n: usize, s: f64) -> Vec<f64> {
        let mut outer = vec![0.0; n + 1];
        let nan = self.field_along(s, 2, &mut outer);
        let mut inner = vec![0.0; n + 1];
        for (j, v) in inner.iter_mut().enumerate().skip(1) {
            *v = self.dx_x(j, s).unwrap_or(f64::NAN);
        }
        let mut out = vec![outer[0] + nan; n + 1];
        for (k, o) in out.iter_mut().enumerate().skip(1) {
            *o = self.mixed_tables[k - 1].apply(&outer, &inner) + nan;
        }
        out
    }

    /// Adds ∂ₓⁿ∂ₓ₀X, n ≥ 1, from the Leibniz forcing.
    pub fn ladder_mixed(&mut self, n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        if n != self.mixed_order() + 1 {
            return Err(Error::MissingOrder(if n > self.mixed_order() { n - 1 } else { n }));
        }
        if n > self.x_order() {
            return Err(Error::MissingOrder(n));
        }
        if n + 2 > self.hist.max_order() {
            return Err(Error::MissingOrder(n + 2));
        }
        while self.mixed_tables.len() < n {
            let k = self.mixed_tables.len() as u32 + 1;
            self.mixed_tables.push(FaaDiBrunoTable::new(k, false)?);
        }
        let q = self.traj.q;
        let sol = {
            let this = &*self;
            let forcing = |s: f64| -> f64 {
                let comp = this.composed_second(n, s);
                let mut acc = 0.0;
                for k in 1..=n {
                    let lower = this.mixed[n - k].eval(s).0;
                    acc += binomial_f64(n as u32, k as u32) * comp[k] * lower;
                }
                -q * acc
            };
            forced_on(self.base.clone(), forcing, &self.opts, &self.breaks[1..])?
        };
        self.mixed.push(sol);
        Ok(())
    }

    /// Builds x-orders up to `n_x` and mixed orders up to `n_mixed`.
    pub fn build(&mut self, n_x: usize, n_mixed: usize) -> Result<()> {
        for n in self.x_order() + 1..=n_x {
            self.ladder_x(n)?;
        }
        for n in self.mixed_order() + 1..=n_mixed {
            self.ladder_mixed(n)?;
        }
        Ok(())
    }

    /// Sample times: the fundamental system's nodes plus a uniform grid.
    pub fn sample_times(&self, extra: usize) -> Vec<f64> {
        let t = self.traj.t;
        let mut pts = self.base.dense_nodes();
        pts.extend((0..=extra).map(|i| t * i as f64 / extra as f64));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// ∫₀ᵗ |∂ₓⁿ[(∂₁²φ)(X,s)]| γ(s)(t−s)/γ(t) ds by Gauss panels on the history intervals.
    pub fn phi2_integral(&mut self, n: usize) -> Result<f64> {
        if n > self.x_order() {
            return Err(Error::MissingOrder(n));
        }
        if n + 2 > self.hist.max_order() {
            return Err(Error::MissingOrder(n + 2));
        }
        while self.mixed_tables.len() < n {
            let k = self.mixed_tables.len() as u32 + 1;
            self.mixed_tables.push(FaaDiBrunoTable::new(k, false)?);
        }
        let t = self.traj.t;
        let gt = gamma(t);
        let gl = GaussLegendre::new(8);
        let mut total = 0.0;
        for w in self.breaks.windows(2) {
            for (s, wt) in gl.on(w[0], w[1]) {
                total += wt * self.composed_second(n, s)[n].abs() * gamma(s) * (t - s) / gt;
            }
        }
        Ok(total)
    }
}

/// Bound margins along one trajectory; each entry is rhs − lhs minimized over samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderMargins {
    pub t: f64,
    /// γ(s)/γ(t) − ∂ₓX and min ∂ₓX.
    pub dx_upper: f64,
    pub dx_positive: f64,
    /// (t−s)/γ(t) − ∂ₓ₀X and min ∂ₓ₀X.
    pub mixed_upper: f64,
    pub mixed_lower: f64,
    /// ∂ₓⁿX, index n−2 for n ≥ 2.
    pub dxn_x: Vec<f64>,
    /// ∂ₓⁿw₀, index n−1 for n ≥ 1.
    pub dxn_w0: Vec<f64>,
    /// ∂ₓⁿ∂ₓ₀X and ∂ₓⁿ∂ₓ₀w, index n.
    pub dxn_mixed: Vec<f64>,
    pub dxn_dx0_w: Vec<f64>,
}

impl LadderMargins {
    pub fn min_margin(&self) -> f64 {
        [self.dx_upper, self.dx_positive, self.mixed_upper, self.mixed_lower]
            .into_iter()
            .chain(self.dxn_x.iter().copied())
            .chain(self.dxn_w0.iter().copied())
            .chain(self.dxn_mixed.iter().copied())
            .chain(self.dxn_dx0_w.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Margins of the first-variation bounds and the higher ladder bounds up to order `n_max`.
pub fn ladder_margins(ladder: &Ladder<'_>, n_max: usize) -> Result<LadderMargins> {
    let t = ladder.traj.t;
    let gt = gamma(t);
    let pts = ladder.sample_times(100);
    let mut m = LadderMargins {
        t,
        dx_upper: f64::INFINITY,
        dx_positive: f64::INFINITY,
        mixed_upper: f64::INFINITY,
        mixed_lower: f64::INFINITY,
        dxn_x: vec![f64::INFINITY; n_max.saturating_sub(1)],
        dxn_w0: vec![],
        dxn_mixed: vec![f64::INFINITY; n_max + 1],
        dxn_dx0_w: vec![],
    };
    for &s in &pts {
        let dx = ladder.dx_x(1, s)?;
        m.dx_upper = m.dx_upper.min(gamma(s) / gt - dx);
        m.dx_positive = m.dx_positive.min(dx);
        let d0 = ladder.dx_mixed(0, s)?;
        m.mixed_upper = m.mixed_upper.min((t - s) / gt - d0);
        m.mixed_lower = m.mixed_lower.min(d0);
        for n in 2..=n_max {
            let f = factorial_f64(n as u32);
            let bound = phi(n as u32, t) * f * f * gamma(s) / (200.0 * gt.powi(n as i32));
            m.dxn_x[n - 2] = m.dxn_x[n - 2].min(bound - ladder.dx_x(n, s)?.abs());
        }
        for n in 0..=n_max {
            let f = factorial_f64(n as u32);
            let bound = phi(n as u32, t) * f * f * (t - s) / gt.powi(n as i32 + 1);
            m.dxn_mixed[n] = m.dxn_mixed[n].min(bound - ladder.dx_mixed(n, s)?.abs());
        }
    }
    for n in 1..=n_max {
        let f = factorial_f64(n as u32);
        let bound = if n == 1 { 1.0 / gt } else { phi(n as u32, t) * f * f / (200.0 * gt.powi(n as i32)) };
        m.dxn_w0.push(bound - ladder.dxn_w0(n)?.abs());
    }
    for n in 0..=n_max {
        let f = factorial_f64(n as u32);
        m.dxn_dx0_w.push(phi(n as u32, t) * f * f / gt.powi(n as i32 + 1) - ladder.dxn_dx0_w(n)?.abs());
    }
    Ok(m)
}

/// (n!)²φₙ(t)/(2γ(t)ⁿ), the bound on the weighted ∂ₓⁿ[(∂₁²φ)(X,s)] integral.
pub fn phi2_bound(n: u32, t: f64) -> f64 {
    let f = factorial_f64(n);
    f * f * phi(n, t) / (2.0 * gamma(t).powi(n as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFunction;

    fn bump_history(amp: f64, max_order: usize) -> FieldHistory {
        let nodes: Vec<f64> = (0..=12).map(|k| 0.5 * k as f64).collect();
        let rhos: Vec<GridFunction> = nodes
            .iter()
            .map(|&s| {
                let w = 1.0 + s * s;
                GridFunction::from_fn(40.0, 641, |x| amp * (-x * x / w).exp() / w.sqrt()).unwrap()
            })
            .collect();
        FieldHistory::from_densities(nodes, &rhos, max_order).unwrap()
    }

    #[test]
    fn zero_field_closed_forms() {
        let hist = FieldHistory::zero(vec![0.0, 2.0, 5.0], 30.0, 64, 4).unwrap();
        let tr = solve_bvp(1.5, -0.5, 4.0, &hist, 1.0, &ShootingOptions::default()).unwrap();
        assert!((tr.v0 - 0.4).abs() < 1e-15);
        assert_eq!(w_pair(&tr), (0.4, 0.4));
        assert!((tr.dx0_w() + 0.2).abs() < 1e-15);
        assert!((tr.dx_x(1.0).unwrap() - 0.4).abs() < 1e-15);
        assert!((tr.dx0_x(1.0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn time_zero_is_instant() {
        let hist = bump_history(1e-3, 4);
        let tr = solve_bvp(0.3, 1.0, 0.0, &hist, -1.0, &ShootingOptions::default()).unwrap();
        assert!((tr.v0 + 0.7).abs() < 1e-15);
        assert_eq!(tr.dx0_w(), -1.0);
    }

    #[test]
    fn newton_converges_and_first_variations_agree() {
        let hist = bump_history(2e-3, 5);
        assert!(hist.damping_ratio().unwrap() < 1.0);
        for q in [1.0, -1.0] {
            let tr = solve_bvp(0.8, -0.3, 5.5, &hist, q, &ShootingOptions::default()).unwrap();
            assert!(tr.residual <= 1e-10);
            let mut ladder = Ladder::new(&tr, &hist).unwrap();
            ladder.build(3, 2).unwrap();
            for s in [0.0, 1.3, 4.0, 5.5] {
                assert!((ladder.dx_x(1, s).unwrap() - tr.dx_x(s).unwrap()).abs() < 1e-8);
                assert!((ladder.dx_mixed(0, s).unwrap() - tr.dx0_x(s).unwrap()).abs() < 1e-8);
            }
            let m = ladder_margins(&ladder, 2).unwrap();
            assert!(m.min_margin() >= 0.0, "{m:?}");
        }
    }

    #[test]
    fn ladder_order_guards() {
        let hist = bump_history(1e-3, 3);
        let tr = solve_bvp(0.1, 0.2, 2.0, &hist, 1.0, &ShootingOptions::default()).unwrap();
        let mut ladder = Ladder::new(&tr, &hist).unwrap();
        assert!(matches!(ladder.ladder_x(3), Err(Error::MissingOrder(2))));
        assert!(matches!(ladder.ladder_mixed(2), Err(Error::MissingOrder(1))));
        ladder.ladder_x(2).unwrap();
        assert!(matches!(ladder.ladder_x(3), Err(Error::MissingOrder(4))));
        assert!(matches!(solve_bvp(0.0, 0.0, 1.0, &hist, 0.5, &ShootingOptions::default()), Err(Error::InvalidArgument(_))));
    }
}
