use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vlasov_yukawa::combinatorics::{binom_phi_sums, faa_di_bruno_apply, coefficient_margins};
use vlasov_yukawa::comparison_ode::{comparison_margins, random_forcing, CoefficientPath};
use vlasov_yukawa::grid::{spatial_derivative, GridFunction};
use vlasov_yukawa::screened_field::{max_principle_margins, solve_potential};
use vlasov_yukawa::transport::{free_streaming_closed_form, shear_transform, GaussianComponent, InitialData};
use vlasov_yukawa::weights::{gamma, TimePoint, MARGIN_SLACK};

fn component() -> impl Strategy<Value = GaussianComponent> {
    (1e-3..1.0f64, 0.3..3.0f64, -3.0..3.0f64, -1.5..1.5f64).prop_map(|(amplitude, a, xc, vc)| GaussianComponent {
        amplitude,
        a,
        xc,
        vc,
    })
}

fn mixture() -> impl Strategy<Value = InitialData> {
    prop::collection::vec(component(), 1..4).prop_map(|c| InitialData::mixture(c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shear_identity(data in mixture(), x in -6.0..6.0f64, v in -4.0..4.0f64) {
        let sheared = shear_transform(|x, v| data.f0(x, v));
        prop_assert_eq!(sheared(x, v), data.f0(x + v, v));
        prop_assert!((data.f0_tilde(x, v) - data.f0(x + v, v)).abs() <= 1e-15);
    }

    #[test]
    fn weight_ratio_stays_in_band(t in 0.0..1e4f64) {
        let r = gamma(t) / (t + 1.0);
        prop_assert!(r > 0.99 && r <= 1.0);
    }

    #[test]
    fn binomial_sums_bounded(n in 1u32..=50, t in 0.0..200.0f64) {
        let s = binom_phi_sums(n, TimePoint::new(t).unwrap());
        prop_assert!(s.sum_from_1 <= 5.0 / 3.0 + MARGIN_SLACK);
        prop_assert!(s.sum_from_0 <= 8.0 / 3.0 + MARGIN_SLACK);
    }

    #[test]
    fn coefficient_margins_nonnegative(n in 1u32..=12, t in 0.0..500.0f64) {
        let rep = coefficient_margins(n, TimePoint::new(t).unwrap()).unwrap();
        prop_assert!(rep.min_margin() >= -MARGIN_SLACK);
    }

    /// ∂ⁿexp(bx + cx²) at 0 obeys dₙ₊₁ = b·dₙ + 2c·n·dₙ₋₁.
    #[test]
    fn faa_di_bruno_gaussian_recurrence(b in -2.0..2.0f64, c in -2.0..2.0f64, n in 1u32..=10) {
        let outer = vec![1.0; n as usize + 1];
        let mut inner = vec![0.0; n as usize + 1];
        inner[1] = b;
        if n >= 2 {
            inner[2] = 2.0 * c;
        }
        let mut d = vec![1.0, b];
        for k in 1..n as usize {
            d.push(b * d[k] + 2.0 * c * k as f64 * d[k - 1]);
        }
        let got = faa_di_bruno_apply(&outer, &inner, n, false).unwrap();
        prop_assert!((got - d[n as usize]).abs() <= 1e-10 * d[n as usize].abs().max(1.0));
    }

    #[test]
    fn free_streaming_conserves_mass(data in mixture(), t in 0.0..30.0f64) {
        let half = 20.0 + 1.5 * t + 12.0 * ((1.0 + t * t) / data.min_rate()).sqrt();
        let rho = GridFunction::from_fn(half, 4001, |x| free_streaming_closed_form(&data, x, t, 0)).unwrap();
        prop_assert!(rho.values().iter().all(|&v| v >= 0.0));
        prop_assert!((rho.integral() - data.mass()).abs() <= 1e-9 * data.mass());
    }

    #[test]
    fn free_streaming_parity(amplitude in 1e-3..1.0f64, a in 0.3..3.0f64, t in 0.0..50.0f64, x in 0.0..20.0f64, n in 0usize..6) {
        let data = InitialData::gaussian(amplitude, a).unwrap();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let (p, m) = (free_streaming_closed_form(&data, x, t, n), free_streaming_closed_form(&data, -x, t, n));
        prop_assert!((p - sign * m).abs() <= 1e-14 * p.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn potential_is_linear_and_solves_the_equation(d1 in mixture(), d2 in mixture(), s in -2.0..2.0f64) {
        let r1 = GridFunction::from_fn(20.0, 1024, |x| free_streaming_closed_form(&d1, x, 0.0, 0)).unwrap();
        let r2 = GridFunction::from_fn(20.0, 1024, |x| free_streaming_closed_form(&d2, x, 0.0, 0)).unwrap();
        let (p1, p2) = (solve_potential(&r1).unwrap(), solve_potential(&r2).unwrap());
        let p = solve_potential(&r1.axpy(s, &r2).unwrap()).unwrap();
        let lin = p.sup_distance(&p1.axpy(s, &p2).unwrap()).unwrap();
        // the kink-aware stencil choice depends on the data, so linearity holds to rounding
        prop_assert!(lin <= 1e-11 * p.sup_norm().max(1e-300), "{:e} {:e}", lin, p.sup_norm());
        // (1 − ∂²)φ = ρ away from the edges
        let d2p = spatial_derivative(&p1, 2).unwrap();
        let scale = r1.sup_norm();
        for i in 100..924 {
            let res = p1.values()[i] - d2p.values()[i] - r1.values()[i];
            prop_assert!(res.abs() <= 1e-6 * scale, "i = {}: {:e}", i, res);
        }
        for n in 0..=4 {
            let m = max_principle_margins(&r1, &p1, n).unwrap();
            prop_assert!(m.m1 >= -1e-8 && m.m2 >= -1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn comparison_bounds_hold_on_random_paths(seed in any::<u64>(), t in 0.1..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = CoefficientPath::random(&mut rng);
        let forcing = [random_forcing(&mut rng, t)];
        let rep = comparison_margins(&h, t, &forcing).unwrap();
        prop_assert!(rep.holds(1e-8), "{:?}", rep);
    }
}
