//! The Picard scheme ρ⁽⁰⁾ = 0, φ⁽ᵏ⁻¹⁾ from ρ⁽ᵏ⁻¹⁾, ρ⁽ᵏ⁾ by transport along the
//! characteristics of φ⁽ᵏ⁻¹⁾, with the contraction and normalization monitors.

use std::io::{BufRead, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{check_charge, ShootingOptions};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::ode::StepMode;
use crate::screened_field::FieldHistory;
use crate::transport::{
    auto_tune_amplitude, density_bound_margins, certify_initial_data, decay_envelope, ladder_sample,
    reconstruct_density, DensitySlice, DensityBoundMargins, CertificateReport, GaussianComponent, InitialData,
    LadderSample, ReconstructionOptions, ReconstructionStats,
};

/// Hypothesis and conclusion constants of the uniform bound.
pub const INPUT_CONSTANT: f64 = 1.0 / 1500.0;
pub const OUTPUT_CONSTANT: f64 = 1.0 / 3000.0;

/// Run parameters; every key is optional in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// +1 or −1.
    pub q: f64,
    pub half_width: f64,
    pub grid_len: usize,
    pub t_max: f64,
    pub time_nodes: usize,
    pub n_max: usize,
    /// Gaussian rate a in A·exp(−a((x−x_c)² + (v−v_c)²)).
    pub rate: f64,
    pub center_x: f64,
    pub center_v: f64,
    /// Fixed amplitude; when absent the amplitude is tuned to the certificate.
    pub amplitude: Option<f64>,
    pub safety: f64,
    /// Orders n = 0..=certify_orders checked for the initial data.
    pub certify_orders: u32,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub min_iterations: usize,
    pub nodes_per_unit: usize,
    pub substeps: usize,
    pub bvp_tol: f64,
    pub max_newton: usize,
    pub linear_accept: f64,
    /// Time nodes and x points per node for the under-the-integral derivative check.
    pub ladder_times: usize,
    pub ladder_points: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub oracle_nv: usize,
    pub oracle_dt: f64,
    /// v_max in units of the thermal width 1/√(2a).
    pub oracle_vmax: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            q: 1.0,
            half_width: 130.0,
            grid_len: 1301,
            t_max: 50.0,
            time_nodes: 64,
            n_max: 4,
            rate: 2.0,
            center_x: 0.0,
            center_v: 0.0,
            amplitude: None,
            safety: 2.0,
            certify_orders: 8,
            tolerance: 1e-8,
            max_iterations: 8,
            min_iterations: 3,
            nodes_per_unit: 32,
            substeps: 2,
            bvp_tol: 1e-10,
            max_newton: 25,
            linear_accept: 1e-7,
            ladder_times: 3,
            ladder_points: 3,
            seed: 0,
            jobs: 0,
            oracle_nv: 512,
            oracle_dt: 0.01,
            oracle_vmax: 6.0,
        }
    }
}

impl RunConfig {
    /// Reduced resolution for a single core: 24 time nodes, 8 x₀ nodes per unit.
    pub fn desk() -> Self {
        Self { time_nodes: 24, nodes_per_unit: 8, oracle_dt: 0.05, ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        check_charge(self.q).map_err(|e| Error::Config(e.to_string()))?;
        let positive = [
            ("half_width", self.half_width),
            ("t_max", self.t_max),
            ("rate", self.rate),
            ("tolerance", self.tolerance),
            ("bvp_tol", self.bvp_tol),
            ("oracle_dt", self.oracle_dt),
            ("oracle_vmax", self.oracle_vmax),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.safety >= 1.0) {
            return Err(Error::Config(format!("safety must be at least 1, got {}", self.safety)));
        }
        if !(self.linear_accept >= 0.0) || !self.center_x.is_finite() || !self.center_v.is_finite() {
            return Err(Error::Config("linear_accept and centers must be finite, linear_accept nonnegative".into()));
        }
        if let Some(a) = self.amplitude {
            if !a.is_finite() {
                return Err(Error::Config(format!("amplitude must be finite, got {a}")));
            }
        }
        let counts = [
            ("grid_len", self.grid_len, 8),
            ("time_nodes", self.time_nodes, 2),
            ("max_iterations", self.max_iterations, 1),
            ("nodes_per_unit", self.nodes_per_unit, 1),
            ("substeps", self.substeps, 1),
            ("max_newton", self.max_newton, 1),
            ("oracle_nv", self.oracle_nv, 16),
        ];
        for (name, v, min) in counts {
            if v < min {
                return Err(Error::Config(format!("{name} must be at least {min}, got {v}")));
            }
        }
        if self.n_max > 6 {
            return Err(Error::Config(format!("n_max must be at most 6, got {}", self.n_max)));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Vec<f64> {
        time_grid(self.t_max, self.time_nodes)
    }

    pub fn reconstruction(&self) -> ReconstructionOptions {
        ReconstructionOptions { nodes_per_unit: self.nodes_per_unit, shooting: self.shooting() }
    }

    pub fn shooting(&self) -> ShootingOptions {
        ShootingOptions {
            bvp_tol: self.bvp_tol,
            max_iter: self.max_newton,
            step: StepMode::Fixed { substeps: self.substeps },
            linear_accept: self.linear_accept,
        }
    }

    /// The Gaussian shape of unit amplitude.
    pub fn shape(&self) -> Result<InitialData> {
        InitialData::mixture(vec![GaussianComponent {
            amplitude: 1.0,
            a: self.rate,
            xc: self.center_x,
            vc: self.center_v,
        }])
    }

    /// Initial data with its certificate: tuned when no amplitude is set.
    pub fn initial_data(&self) -> Result<(InitialData, CertificateReport)> {
        match self.amplitude {
            Some(a) => {
                let data = self.shape()?.scaled(a);
                let report = certify_initial_data(&data, self.certify_orders)?;
                Ok((data, report))
            }
            None => auto_tune_amplitude(&self.shape()?, self.certify_orders, self.safety),
        }
    }
}

/// Nodes (1+t_max)^{k/(count−1)} − 1, k = 0..count: geometric refinement near 0.
pub fn time_grid(t_max: f64, count: usize) -> Vec<f64> {
    let m = (count.max(2) - 1) as f64;
    let mut g: Vec<f64> = (0..count.max(2)).map(|k| (1.0 + t_max).powf(k as f64 / m) - 1.0).collect();
    g[0] = 0.0;
    *g.last_mut().unwrap() = t_max;
    g
}

/// One Picard iterate on the time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityHistory {
    pub iterate: usize,
    pub nodes: Vec<f64>,
    pub slices: Vec<DensitySlice>,
    /// sup-difference to iterate k−1 for every k ≥ 1 up to this one.
    pub differences: Vec<f64>,
}

impl DensityHistory {
    pub fn zero(nodes: Vec<f64>, half_width: f64, len: usize, n_max: usize) -> Result<Self> {
        let z = GridFunction::zeros(half_width, len)?;
        let slices = nodes.iter().map(|&t| DensitySlice::new(t, z.clone(), n_max)).collect::<Result<Vec<_>>>()?;
        Ok(Self { iterate: 0, nodes, slices, differences: vec![] })
    }

    pub fn from_slices(iterate: usize, slices: Vec<DensitySlice>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::Grid("a density history needs at least one slice".into()));
        }
        for s in &slices[1..] {
            slices[0].rho().check_same(s.rho())?;
        }
        let nodes = slices.iter().map(|s| s.t).collect();
        Ok(Self { iterate, nodes, slices, differences: vec![] })
    }

    pub fn rhos(&self) -> Vec<GridFunction> {
        self.slices.iter().map(|s| s.rho().clone()).collect()
    }

    pub fn half_width(&self) -> f64 {
        self.slices[0].rho().half_width()
    }

    pub fn grid_len(&self) -> usize {
        self.slices[0].rho().len()
    }

    pub fn is_zero(&self) -> bool {
        self.slices.iter().all(|s| s.rho().values().iter().all(|&v| v == 0.0))
    }

    /// The field of this iterate with ∂ₓ-orders up to `max_order`.
    pub fn field(&self, max_order: usize) -> Result<FieldHistory> {
        if self.is_zero() {
            FieldHistory::zero(self.nodes.clone(), self.half_width(), self.grid_len(), max_order)
        } else {
            FieldHistory::from_densities(self.nodes.clone(), &self.rhos(), max_order)
        }
    }

    /// sup over time nodes of ‖ρ − ρ′‖∞.
    pub fn sup_difference(&self, other: &Self) -> Result<f64> {
        if self.nodes != other.nodes {
            return Err(Error::Grid("histories on different time grids".into()));
        }
        self.slices.iter().zip(&other.slices).try_fold(0.0f64, |m, (a, b)| Ok(m.max(a.rho().sup_distance(b.rho())?)))
    }

    /// max over nodes and n ≤ n_max of cₙ(t).
    pub fn max_constant(&self, n_max: usize) -> f64 {
        self.slices.iter().map(|s| s.max_constant(n_max)).fold(0.0, f64::max)
    }

    /// All slices in the slice CSV schema, one header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.slices[0].n_max();
        write!(w, "t,x,rho")?;
        for k in 1..=n {
            write!(w, ",d{k}rho")?;
        }
        writeln!(w)?;
        for s in &self.slices {
            let rho = s.rho();
            for i in 0..rho.len() {
                write!(w, "{:.17e},{:.17e}", s.t, rho.x(i))?;
                for d in &s.derivatives {
                    write!(w, ",{:.17e}", d.values()[i])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Reads the t, x, rho columns of a history CSV; derivatives are recomputed to `n_max`.
    pub fn read_csv<R: BufRead>(r: R, n_max: usize) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty history file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 3 || cols[0] != "t" || cols[1] != "x" || cols[2] != "rho" {
            return Err(Error::Parse(format!("unexpected history header '{header}'")));
        }
        let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = vec![];
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .take(3)
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))?;
            if f.len() < 3 {
                return Err(Error::Parse(format!("line {}: expected t,x,rho", ln + 2)));
            }
            match groups.last_mut() {
                Some(g) if g.0 == f[0] => {
                    g.1.push(f[1]);
                    g.2.push(f[2]);
                }
                _ => groups.push((f[0], vec![f[1]], vec![f[2]])),
            }
        }
        let slices = groups
            .into_iter()
            .map(|(t, xs, vals)| {
                let hw = *xs.last().ok_or_else(|| Error::Parse("empty slice".into()))?;
                if (xs[0] + hw).abs() > 1e-9 * hw.max(1.0) {
                    return Err(Error::Parse(format!("slice at t = {t} is not centred")));
                }
                DensitySlice::new(t, GridFunction::new(hw, vals)?, n_max)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_slices(0, slices)
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub iterate: usize,
    /// max ‖∂ₓ²φ⁽ᵏ⁻¹⁾(s)‖∞ / (−γ″(s)/γ(s)); below 1 certifies the comparison arguments.
    pub damping_ratio: f64,
    pub stats: ReconstructionStats,
    pub seconds: f64,
}

/// One Picard step: freeze the field of `prev` and reconstruct every time node.
pub fn picard_step(
    prev: &DensityHistory,
    data: &InitialData,
    cfg: &RunConfig,
) -> Result<(DensityHistory, StepDiagnostics, FieldHistory)> {
    let start = Instant::now();
    let field = prev.field(cfg.n_max + 2)?;
    let damping_ratio = if field.is_zero() { 0.0 } else { field.damping_ratio()? };
    let opts = cfg.reconstruction();
    let (hw, len) = (prev.half_width(), prev.grid_len());
    let results = prev
        .nodes
        .par_iter()
        .map(|&t| reconstruct_density(data, &field, cfg.q, hw, len, t, cfg.n_max, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = ReconstructionStats::default();
    let mut slices = Vec::with_capacity(results.len());
    for r in results {
        stats.characteristics += r.stats.characteristics;
        stats.newton_iterations += r.stats.newton_iterations;
        stats.max_residual = stats.max_residual.max(r.stats.max_residual);
        slices.push(r.slice);
    }
    let mut next = DensityHistory::from_slices(prev.iterate + 1, slices)?;
    let diff = next.sup_difference(prev)?;
    next.differences = prev.differences.clone();
    next.differences.push(diff);
    let diag = StepDiagnostics { iterate: next.iterate, damping_ratio, stats, seconds: start.elapsed().as_secs_f64() };
    Ok((next, diag, field))
}

/// (input constant, output constant, implication holds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagationCheck {
    pub input_const: f64,
    pub output_const: f64,
    pub pass: bool,
}

pub fn propagation_check(input: &DensityHistory, output: &DensityHistory, n_max: usize) -> PropagationCheck {
    let input_const = input.max_constant(n_max);
    let output_const = output.max_constant(n_max);
    let pass = input_const > INPUT_CONSTANT || output_const <= OUTPUT_CONSTANT;
    PropagationCheck { input_const, output_const, pass }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateReport {
    pub iterate: usize,
    pub difference: f64,
    /// difference / previous difference, from the second iterate on.
    pub ratio: Option<f64>,
    pub max_constant: f64,
    pub propagation: PropagationCheck,
    pub diagnostics: StepDiagnostics,
}

/// sup|∂ₓⁿρ| against cₙ and the decay envelope at one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub n: usize,
    pub sup: f64,
    pub constant: f64,
    pub envelope: f64,
    pub within_envelope: bool,
}

pub fn decay_table(hist: &DensityHistory, n_max: usize) -> Vec<DecayRow> {
    let mut rows = vec![];
    for s in &hist.slices {
        for n in 0..=n_max.min(s.n_max()) {
            let envelope = decay_envelope(n as u32, s.t);
            rows.push(DecayRow {
                t: s.t,
                n,
                sup: s.sups[n],
                constant: s.constants[n],
                envelope,
                within_envelope: s.sups[n] <= envelope,
            });
        }
    }
    rows
}

pub fn write_decay_csv<W: Write>(rows: &[DecayRow], mut w: W) -> Result<()> {
    writeln!(w, "t,n,sup,c_n,envelope,within_envelope")?;
    for r in rows {
        writeln!(w, "{:.17e},{},{:.17e},{:.17e},{:.17e},{}", r.t, r.n, r.sup, r.constant, r.envelope, r.within_envelope)?;
    }
    Ok(())
}

/// The ladder route against the grid route at one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteComparison {
    pub sample: LadderSample,
    /// Grid-differentiated ∂ₓⁿρ at the same point.
    pub grid: Vec<f64>,
    pub discrepancy: Vec<f64>,
    pub margins: DensityBoundMargins,
}

/// Ladder samples at grid points of the final iterate, on the field that produced it.
pub fn route_comparisons(
    hist: &DensityHistory,
    field: &FieldHistory,
    data: &InitialData,
    cfg: &RunConfig,
) -> Result<Vec<RouteComparison>> {
    if cfg.ladder_times == 0 || cfg.ladder_points == 0 {
        return Ok(vec![]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = hist.nodes.len();
    let mut picks = vec![];
    for j in 0..cfg.ladder_times {
        // spread over the grid, skipping t = 0
        let k = 1 + (j * (m - 2)) / cfg.ladder_times.max(1) + (m - 2) / (2 * cfg.ladder_times.max(1));
        let k = k.min(m - 1);
        let slice = &hist.slices[k];
        let rho = slice.rho();
        let peak = rho.sup_norm();
        let support: Vec<usize> = (0..rho.len()).filter(|&i| rho.values()[i].abs() > 1e-3 * peak).collect();
        if support.is_empty() {
            continue;
        }
        for _ in 0..cfg.ladder_points {
            picks.push((k, support[rng.gen_range(0..support.len())]));
        }
    }
    let shooting = cfg.shooting();
    picks
        .par_iter()
        .map(|&(k, i)| {
            let slice = &hist.slices[k];
            let x = slice.rho().x(i);
            let sample = ladder_sample(data, field, cfg.q, x, slice.t, cfg.n_max, cfg.nodes_per_unit, &shooting)?;
            let grid: Vec<f64> = slice.derivatives.iter().map(|d| d.values()[i]).collect();
            let discrepancy = sample.derivatives.iter().zip(&grid).map(|(a, b)| (a - b).abs()).collect();
            let margins = density_bound_margins(&sample);
            Ok(RouteComparison { sample, grid, discrepancy, margins })
        })
        .collect()
}

/// Everything a run reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub amplitude: f64,
    pub cert: CertificateReport,
    pub iterates: Vec<IterateReport>,
    pub converged: bool,
    /// Every ratio from the second iterate on is below 1/2.
    pub contraction: bool,
    /// Every iterate has cₙ(t) ≤ 1/3000 for n ≤ n_max.
    pub normalization: bool,
    /// The final iterate is inside 3ⁿ(n!)²(t+1)^{−n−1}/10³.
    pub envelope: bool,
    pub decay: Vec<DecayRow>,
    pub routes: Vec<RouteComparison>,
    pub seconds: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.converged
            && self.contraction
            && self.normalization
            && self.envelope
            && self.cert.first_failure().is_none()
            && self.iterates.iter().all(|i| i.propagation.pass)
    }

    /// Labels of the failed checks.
    pub fn failures(&self) -> Vec<String> {
        let mut out = vec![];
        if let Some(n) = self.cert.first_failure() {
            out.push(format!("initial data certificate fails at order {n}"));
        }
        if !self.converged {
            out.push("iteration did not converge".into());
        }
        if !self.contraction {
            out.push("difference ratio reached 1/2".into());
        }
        if !self.normalization {
            out.push("normalized constant above 1/3000".into());
        }
        if !self.envelope {
            out.push("final density outside the decay envelope".into());
        }
        for i in &self.iterates {
            if !i.propagation.pass {
                out.push(format!("uniform bound implication fails at iterate {}", i.iterate));
            }
        }
        out
    }
}

/// Iterates until the sup-difference drops below the tolerance (after at least
/// `min_iterations`) or `max_iterations` is reached.
pub fn run(cfg: &RunConfig, data: &InitialData, cert: CertificateReport) -> Result<(DensityHistory, RunReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut hist = DensityHistory::zero(cfg.time_grid(), cfg.half_width, cfg.grid_len, cfg.n_max)?;
    let mut iterates: Vec<IterateReport> = vec![];
    let mut last_field = None;
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let (next, diagnostics, field) = picard_step(&hist, data, cfg)?;
        let difference = *next.differences.last().unwrap();
        let ratio = iterates.last().map(|p| if p.difference > 0.0 { difference / p.difference } else { 0.0 });
        let propagation = propagation_check(&hist, &next, cfg.n_max);
        log::info!(
            "iterate {}: difference {:.3e}, max c_n {:.3e}, {} characteristics in {:.1}s",
            next.iterate,
            difference,
            next.max_constant(cfg.n_max),
            diagnostics.stats.characteristics,
            diagnostics.seconds
        );
        iterates.push(IterateReport {
            iterate: next.iterate,
            difference,
            ratio,
            max_constant: next.max_constant(cfg.n_max),
            propagation,
            diagnostics,
        });
        hist = next;
        last_field = Some(field);
        if difference < cfg.tolerance && hist.iterate >= cfg.min_iterations.max(1) {
            converged = true;
            break;
        }
    }
    let contraction = iterates.iter().filter_map(|i| i.ratio).all(|r| r < 0.5);
    let normalization = iterates.iter().all(|i| i.max_constant <= OUTPUT_CONSTANT);
    let decay = decay_table(&hist, cfg.n_max);
    let envelope = decay.iter().all(|r| r.within_envelope);
    let routes = match &last_field {
        Some(f) => route_comparisons(&hist, f, data, cfg)?,
        None => vec![],
    };
    let report = RunReport {
        config: cfg.clone(),
        amplitude: data.total_amplitude(),
        cert,
        iterates,
        converged,
        contraction,
        normalization,
        envelope,
        decay,
        routes,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((hist, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            half_width: 40.0,
            grid_len: 321,
            t_max: 4.0,
            time_nodes: 6,
            nodes_per_unit: 6,
            ladder_times: 1,
            ladder_points: 1,
            n_max: 3,
            ..RunConfig::desk()
        }
    }

    #[test]
    fn time_grid_is_geometric() {
        let g = time_grid(50.0, 5);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[4], 50.0);
        for w in g.windows(3) {
            assert!(w[2] - w[1] > w[1] - w[0]);
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = RunConfig::desk();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        assert!(matches!(RunConfig::from_toml("q = 0.5"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let cfg = RunConfig { amplitude: Some(0.0), min_iterations: 1, ..small() };
        let (data, cert) = cfg.initial_data().unwrap();
        let (hist, report) = run(&cfg, &data, cert).unwrap();
        assert!(hist.is_zero());
        assert_eq!(report.iterates.len(), 1);
        assert!(report.passed());
    }

    #[test]
    fn csv_round_trip() {
        let cfg = small();
        let (data, cert) = cfg.initial_data().unwrap();
        let (hist, report) = run(&RunConfig { max_iterations: 2, min_iterations: 2, ..cfg.clone() }, &data, cert).unwrap();
        assert!(report.routes.len() == 1);
        let mut buf = vec![];
        hist.write_csv(&mut buf).unwrap();
        let back = DensityHistory::read_csv(&buf[..], cfg.n_max).unwrap();
        assert_eq!(back.nodes, hist.nodes);
        assert!(back.sup_difference(&hist).unwrap() < 1e-300);
    }
}
