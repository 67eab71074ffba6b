//! Dormand–Prince 5(4) integrator with continuous output.
//!
//! Integration runs over a sorted list of breakpoints; steps never straddle a
//! breakpoint. In adaptive mode the step size is error controlled; in fixed
//! mode every breakpoint interval is split into a fixed number of equal steps,
//! which makes the end state a smooth function of the initial data.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Adaptive { rtol: f64, atol: f64 },
    Fixed { substeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub mode: StepMode,
    pub max_steps: usize,
    pub record: bool,
}

impl Options {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        Self { mode: StepMode::Adaptive { rtol, atol }, max_steps: 200_000, record: true }
    }

    pub fn fixed(substeps: usize) -> Self {
        Self { mode: StepMode::Fixed { substeps: substeps.max(1) }, max_steps: usize::MAX, record: true }
    }

    pub fn without_record(mut self) -> Self {
        self.record = false;
        self
    }
}

#[derive(Debug, Clone)]
struct DenseStep<const D: usize> {
    s0: f64,
    h: f64,
    r: [[f64; D]; 5],
}

/// Continuous extension of an integration.
#[derive(Debug, Clone)]
pub struct DenseSolution<const D: usize> {
    steps: Vec<DenseStep<D>>,
    start: f64,
    end: f64,
}

impl<const D: usize> DenseSolution<D> {
    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Step boundaries, including both ends.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.steps.iter().map(|st| st.s0).collect();
        out.push(self.end);
        out
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    pub fn eval(&self, s: f64) -> [f64; D] {
        let idx = match self.steps.binary_search_by(|st| st.s0.total_cmp(&s)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let st = &self.steps[idx.min(self.steps.len() - 1)];
        let th = ((s - st.s0) / st.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let mut out = [0.0; D];
        for (i, o) in out.iter_mut().enumerate() {
            *o = st.r[0][i]
                + th * (st.r[1][i] + th1 * (st.r[2][i] + th * (st.r[3][i] + th1 * st.r[4][i])));
        }
        out
    }
}

/// Integrates y' = f(s, y) from `breaks[0]` to the last breakpoint.
pub fn integrate<const D: usize, F>(
    mut f: F,
    breaks: &[f64],
    y0: [f64; D],
    opts: &Options,
) -> Result<([f64; D], Option<DenseSolution<D>>)>
where
    F: FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
{
    if breaks.len() < 2 {
        return Err(Error::Integration("need at least two breakpoints".into()));
    }
    if breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Integration("breakpoints must increase strictly".into()));
    }
    let mut dense = opts.record.then(|| DenseSolution {
        steps: Vec::new(),
        start: breaks[0],
        end: *breaks.last().unwrap(),
    });
    let mut y = y0;
    let mut s = breaks[0];
    let mut k1 = f(s, &y)?;
    let mut steps = 0usize;
    let mut h_guess = match opts.mode {
        StepMode::Adaptive { rtol, atol } => initial_step(&y, &k1, breaks[1] - breaks[0], rtol, atol),
        StepMode::Fixed { .. } => 0.0,
    };

    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        match opts.mode {
            StepMode::Fixed { substeps } => {
                let h = (b - a) / substeps as f64;
                for j in 0..substeps {
                    let s_next = if j + 1 == substeps { b } else { a + (j + 1) as f64 * h };
                    let hh = s_next - s;
                    let st = stage(&mut f, s, hh, &y, &k1)?;
                    if let Some(d) = dense.as_mut() {
                        d.steps.push(st.dense(s, hh, &y, &k1));
                    }
                    y = st.y_new;
                    k1 = st.k7;
                    s = s_next;
                }
                steps += substeps;
            }
            StepMode::Adaptive { rtol, atol } => {
                let mut h = h_guess.min(b - a);
                while s < b {
                    if steps >= opts.max_steps {
                        return Err(Error::Integration(format!("step limit reached at s = {s}")));
                    }
                    let last = s + h >= b - 1e-14 * b.abs().max(1.0);
                    let hh = if last { b - s } else { h };
                    if hh <= 1e-15 * s.abs().max(1.0) {
                        return Err(Error::Integration(format!("step size underflow at s = {s}")));
                    }
                    let st = stage(&mut f, s, hh, &y, &k1)?;
                    let mut err2 = 0.0;
                    for i in 0..D {
                        let sc = atol + rtol * y[i].abs().max(st.y_new[i].abs());
                        let e = st.err[i] / sc;
                        err2 += e * e;
                    }
                    let err = (err2 / D as f64).sqrt();
                    if !err.is_finite() {
                        h = 0.2 * hh;
                        steps += 1;
                        continue;
                    }
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if err <= 1.0 {
                        if let Some(d) = dense.as_mut() {
                            d.steps.push(st.dense(s, hh, &y, &k1));
                        }
                        y = st.y_new;
                        k1 = st.k7;
                        s = if last { b } else { s + hh };
                        h = hh * fac;
                        if !last {
                            h_guess = h;
                        }
                    } else {
                        h = hh * fac.min(1.0);
                    }
                    steps += 1;
                }
                h_guess = h_guess.max(h);
            }
        }
        s = b;
    }
    Ok((y, dense))
}

fn initial_step<const D: usize>(y: &[f64; D], f0: &[f64; D], span: f64, rtol: f64, atol: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..D {
        let sc = atol + rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let d0 = (d0 / D as f64).sqrt();
    let d1 = (d1 / D as f64).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-3 * span } else { 0.01 * d0 / d1 };
    h.min(span).max(1e-10 * span)
}

struct Stage<const D: usize> {
    y_new: [f64; D],
    k3: [f64; D],
    k4: [f64; D],
    k5: [f64; D],
    k6: [f64; D],
    k7: [f64; D],
    err: [f64; D],
}

impl<const D: usize> Stage<D> {
    fn dense(&self, s: f64, h: f64, y: &[f64; D], k1: &[f64; D]) -> DenseStep<D> {
        let mut r = [[0.0; D]; 5];
        for i in 0..D {
            let ydiff = self.y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            r[0][i] = y[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * self.k7[i] - bspl;
            r[4][i] = h
                * (D1 * k1[i] + D3 * self.k3[i] + D4 * self.k4[i] + D5 * self.k5[i] + D6 * self.k6[i]
                    + D7 * self.k7[i]);
        }
        DenseStep { s0: s, h, r }
    }
}

fn stage<const D: usize, F>(f: &mut F, s: f64, h: f64, y: &[f64; D], k1: &[f64; D]) -> Result<Stage<D>>
where
    F: FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
{
    let mut t = [0.0; D];
    for i in 0..D {
        t[i] = y[i] + h * A21 * k1[i];
    }
    let k2 = f(s + C2 * h, &t)?;
    for i in 0..D {
        t[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    let k3 = f(s + C3 * h, &t)?;
    for i in 0..D {
        t[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    let k4 = f(s + C4 * h, &t)?;
    for i in 0..D {
        t[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    let k5 = f(s + C5 * h, &t)?;
    for i in 0..D {
        t[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    let k6 = f(s + h, &t)?;
    let mut y_new = [0.0; D];
    for i in 0..D {
        y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    let k7 = f(s + h, &y_new)?;
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok(Stage { y_new, k3, k4, k5, k6, k7, err })
}
