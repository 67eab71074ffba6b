//! Dual-route and frozen-value checks across modules.

use approx::assert_relative_eq;
use vlasov_yukawa::characteristics::{solve_bvp, solve_bvp_from, Ladder, ShootingOptions};
use vlasov_yukawa::comparison_ode::{solve_y1, CoefficientPath, FundamentalSystem};
use vlasov_yukawa::grid::GridFunction;
use vlasov_yukawa::ode::StepMode;
use vlasov_yukawa::oracle::{run_oracle, OracleOptions};
use vlasov_yukawa::picard::{picard_step, time_grid, DensityHistory, RunConfig};
use vlasov_yukawa::screened_field::FieldHistory;
use vlasov_yukawa::transport::{
    certify_initial_data, initial_data_bound, free_streaming_closed_form, reconstruct_density, InitialData, ReconstructionOptions,
};
use vlasov_yukawa::verification::free_streaming_field;
use vlasov_yukawa::weights::gamma;

fn desk_data() -> InitialData {
    InitialData::gaussian(3.7e-6, 2.0).unwrap()
}

/// A field strong enough to bend characteristics visibly: free streaming of
/// ×100 desk data over t ≤ 20.
fn strong_field() -> FieldHistory {
    let cfg = RunConfig { t_max: 20.0, ..RunConfig::desk() };
    free_streaming_field(&cfg, &desk_data().scaled(100.0), 6).unwrap()
}

fn fine() -> ShootingOptions {
    ShootingOptions { bvp_tol: 1e-14, max_iter: 40, step: StepMode::Fixed { substeps: 8 }, linear_accept: 0.0 }
}

#[test]
fn zero_field_reconstruction_matches_closed_form() {
    let data = InitialData::gaussian(1.0, 0.5).unwrap();
    let nodes = time_grid(50.0, 8);
    let zero = FieldHistory::zero(nodes, 60.0, 121, 4).unwrap();
    let opts = ReconstructionOptions { nodes_per_unit: 24, ..Default::default() };
    for t in [0.0, 1.0, 4.0, 16.0, 50.0] {
        let rec = reconstruct_density(&data, &zero, 1.0, 60.0, 121, t, 0, &opts).unwrap();
        let rho = rec.slice.rho();
        let err = rho
            .xs()
            .iter()
            .zip(rho.values())
            .map(|(&x, v)| (v - free_streaming_closed_form(&data, x, t, 0)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "t = {t}: {err:e}");
    }
}

#[test]
fn reconstruction_keeps_mass_and_sign_in_a_field() {
    let data = desk_data().scaled(100.0);
    let hist = strong_field();
    let opts = ReconstructionOptions { nodes_per_unit: 8, ..Default::default() };
    for q in [1.0, -1.0] {
        let rec = reconstruct_density(&data, &hist, q, 130.0, 1301, 20.0, 0, &opts).unwrap();
        let rho = rec.slice.rho();
        assert!(rho.values().iter().all(|&v| v >= 0.0));
        assert_relative_eq!(rho.integral(), data.mass(), max_relative = 1e-8);
        // even data, even field: even density
        let v = rho.values();
        let asym = (0..v.len()).map(|i| (v[i] - v[v.len() - 1 - i]).abs()).fold(0.0, f64::max);
        assert!(asym <= 1e-9 * rho.sup_norm(), "q = {q}: {asym:e}");
    }
}

#[test]
fn charge_flip_mirrors_trajectories_in_an_even_field() {
    let hist = strong_field();
    let opts = ShootingOptions::default();
    for (x, x0, t) in [(1.5, -0.5, 5.0), (-3.0, 2.0, 12.0), (0.2, 0.9, 20.0)] {
        let a = solve_bvp(x, x0, t, &hist, 1.0, &opts).unwrap();
        let b = solve_bvp(-x, -x0, t, &hist, 1.0, &opts).unwrap();
        assert_relative_eq!(a.w0(), -b.w0(), epsilon = 1e-12);
        assert_relative_eq!(a.w(), -b.w(), epsilon = 1e-12);
        let c = solve_bvp(x, x0, t, &hist, -1.0, &opts).unwrap();
        let d = solve_bvp(-x, -x0, t, &hist, -1.0, &opts).unwrap();
        assert_relative_eq!(c.w0(), -d.w0(), epsilon = 1e-12);
        assert!((a.w0() - c.w0()).abs() > 1e-6, "the charge must matter in this field");
    }
}

#[test]
fn resolving_from_the_endpoint_is_idempotent() {
    let hist = strong_field();
    let opts = ShootingOptions::default();
    let a = solve_bvp(2.0, -1.0, 8.0, &hist, 1.0, &opts).unwrap();
    let end = a.state(8.0).unwrap()[0];
    let b = solve_bvp(end, -1.0, 8.0, &hist, 1.0, &opts).unwrap();
    assert_relative_eq!(a.w(), b.w(), epsilon = 1e-9);
    assert!(a.residual <= 1e-10);
}

#[test]
fn first_variations_match_finite_differences() {
    let hist = strong_field();
    let (x, x0, t, q) = (1.0, -0.5, 10.0, 1.0);
    let tr = solve_bvp_from(x, x0, t, &hist, q, &fine(), (x - x0) / (1.0 + t), true).unwrap();
    let d = 1e-3;
    let at = |x: f64, x0: f64| solve_bvp_from(x, x0, t, &hist, q, &fine(), tr.w0(), false).unwrap();
    let dx = (at(x + d, x0).w0() - at(x - d, x0).w0()) / (2.0 * d);
    let dx0 = (at(x, x0 + d).w() - at(x, x0 - d).w()) / (2.0 * d);
    assert!((tr.dx_w0() - dx).abs() <= 1e-6, "{} vs {dx}", tr.dx_w0());
    assert!((tr.dx0_w() - dx0).abs() <= 1e-6, "{} vs {dx0}", tr.dx0_w());
    assert!(tr.dx_w0().abs() <= 1.0 / gamma(t));
    assert!(tr.dx0_w().abs() <= 1.0 / gamma(t));
}

#[test]
fn second_order_ladders_match_finite_differences() {
    let hist = strong_field();
    let (x, x0, t, q) = (0.5, -0.3, 3.0, 1.0);
    let tr = solve_bvp_from(x, x0, t, &hist, q, &fine(), (x - x0) / (1.0 + t), true).unwrap();
    let mut ladder = Ladder::new(&tr, &hist).unwrap();
    ladder.build(2, 1).unwrap();
    let d = 0.05;
    let at = |x: f64| solve_bvp_from(x, x0, t, &hist, q, &fine(), tr.w0(), false).unwrap();
    let (p, m, c) = (at(x + d), at(x - d), at(x));
    let fd2 = (p.w0() - 2.0 * c.w0() + m.w0()) / (d * d);
    let mixed = (p.dx0_w() - m.dx0_w()) / (2.0 * d);
    assert!((ladder.dxn_w0(2).unwrap() - fd2).abs() <= 1e-5);
    assert!((ladder.dxn_dx0_w(1).unwrap() - mixed).abs() <= 1e-5);
}

#[test]
fn kernel_is_symmetric_and_matches_zero_coefficient_form() {
    let t = 7.0;
    let sys = FundamentalSystem::new(&CoefficientPath::zero(), t).unwrap();
    for (s, tau) in [(1.0, 3.0), (0.0, 6.5), (2.5, 2.5), (6.0, 7.0)] {
        let k = sys.kernel(s, tau).unwrap();
        assert_relative_eq!(k, sys.kernel(tau, s).unwrap(), epsilon = 1e-14);
        let (lo, hi) = if tau <= s { (tau, s) } else { (s, tau) };
        assert_relative_eq!(k, (1.0 + lo) * (t - hi) / (1.0 + t), epsilon = 1e-10);
    }
    let ex = FundamentalSystem::new(&CoefficientPath::extreme(-1.0), 40.0).unwrap();
    for s in [0.0, 3.0, 17.0, 39.0] {
        let (y1, dy1) = ex.y1(s);
        let (y2, dy2) = ex.y2(s);
        assert_relative_eq!(dy2 * y1 - dy1 * y2, -1.0, epsilon = 1e-9);
    }
}

#[test]
fn doubling_the_initial_value_doubles_the_solution() {
    let h = CoefficientPath::extreme(1.0);
    let a = solve_y1(&h, 10.0, 1.0).unwrap();
    let b = solve_y1(&h, 10.0, 2.0).unwrap();
    for s in [0.0, 2.0, 9.0] {
        assert_relative_eq!(b.eval(s).0, 2.0 * a.eval(s).0, max_relative = 1e-14);
    }
}

#[test]
fn initial_data_certificate_values() {
    let zero = certify_initial_data(&InitialData::zero(), 8).unwrap();
    for m in &zero.margins {
        assert_eq!(m.margin, initial_data_bound(m.n));
    }
    // ‖(∂ₓ+∂ᵥ)²Ae^{−x²−v²}‖₁ = 8√(2π)·A·e^{−1/2}, so A = 1e-5 misses the n = 1 bound 1e-4
    let unit = InitialData::gaussian(1e-5, 1.0).unwrap();
    let rep = certify_initial_data(&unit, 8).unwrap();
    let expected = 8.0 * (2.0 * std::f64::consts::PI).sqrt() * 1e-5 * (-0.5f64).exp();
    assert_relative_eq!(rep.margins[1].norm, expected, max_relative = 1e-9);
    assert_eq!(rep.first_failure(), Some(1));
    let small = unit.scaled(0.8);
    let rep = certify_initial_data(&small, 8).unwrap();
    assert!(rep.first_failure().is_none());
    let double = certify_initial_data(&small.scaled(2.0), 8).unwrap();
    for (a, b) in rep.margins.iter().zip(&double.margins) {
        // margin = bound − A·norm₁
        assert_relative_eq!(a.bound - b.margin, 2.0 * (a.bound - a.margin), max_relative = 1e-6);
    }
}

#[test]
fn first_iterate_is_free_streaming() {
    let cfg = RunConfig {
        half_width: 40.0,
        grid_len: 321,
        t_max: 4.0,
        time_nodes: 5,
        nodes_per_unit: 16,
        n_max: 2,
        ..RunConfig::desk()
    };
    let data = InitialData::gaussian(1e-5, 2.0).unwrap();
    let zero = DensityHistory::zero(cfg.time_grid(), cfg.half_width, cfg.grid_len, cfg.n_max).unwrap();
    let (next, _, _) = picard_step(&zero, &data, &cfg).unwrap();
    for (t, slice) in next.nodes.iter().zip(&next.slices) {
        let closed = GridFunction::from_fn(40.0, 321, |x| free_streaming_closed_form(&data, x, *t, 0)).unwrap();
        assert!(slice.rho().sup_distance(&closed).unwrap() <= 1e-8 * closed.sup_norm().max(1e-300) + 1e-20);
    }
}

#[test]
fn zero_field_oracle_is_free_streaming() {
    let data = InitialData::gaussian(1.0, 2.0).unwrap();
    let nodes = [0.0, 1.0, 3.0];
    let opts = OracleOptions { nv: 256, dt: 0.05, vmax_widths: 6.0, zero_field: true };
    let run = run_oracle(&data, 1.0, 30.0, 601, &nodes, 0, &opts).unwrap();
    for (t, slice) in run.history.nodes.iter().zip(&run.history.slices) {
        let closed = GridFunction::from_fn(30.0, 601, |x| free_streaming_closed_form(&data, x, *t, 0)).unwrap();
        // cubic-spline advection error, about 5e-5 relative at this resolution
        assert!(slice.rho().sup_distance(&closed).unwrap() <= 1e-4 * closed.sup_norm(), "t = {t}");
    }
    assert!(run.mass_drift <= 1e-10);
}
