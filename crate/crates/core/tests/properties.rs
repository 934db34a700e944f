use num_complex::Complex64;
use pilotwave::ensemble::{ks_statistic, sample_equilibrium, PiecewiseLinear};
use pilotwave::guidance::velocity_field;
use pilotwave::propagator::PropagatorPlan;
use pilotwave::subsystem::projective_distance;
use pilotwave::wavefield::{gaussian, GridSpec, Potential, WaveField};
use proptest::prelude::*;

fn grid_1d() -> GridSpec {
    GridSpec::new(&[(-12.0, 12.0, 128)], 1.0, &[1.0]).unwrap()
}

fn packet(g: &GridSpec, c: f64, s: f64, k: f64) -> WaveField {
    WaveField::from_fn(g, |q| gaussian(q[0], c, s, k))
        .unwrap()
        .normalized()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn propagation_preserves_norm(c in -3.0..3.0f64, s in 0.6..2.0f64, k in -3.0..3.0f64, w in 0.0..0.2f64) {
        let g = grid_1d();
        let v = Potential::from_fn(&g, |q| w * q[0] * q[0]).unwrap();
        let plan = PropagatorPlan::new(0.01, v).unwrap();
        let psi = packet(&g, c, s, k);
        let out = plan.evolve(&psi, 2.0, &[]).unwrap();
        prop_assert!((out[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_ignores_global_phase_and_scale(
        c in -2.0..2.0f64, k in -2.0..2.0f64, r in 0.1..10.0f64, phase in 0.0..std::f64::consts::TAU,
    ) {
        let g = grid_1d();
        // keep the wavenumber on the box lattice so the field stays periodic
        let k = (k * 24.0 / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI / 24.0;
        let psi = packet(&g, c, 1.0, k);
        let a = velocity_field(&psi).unwrap();
        let b = velocity_field(&psi.scaled(Complex64::from_polar(r, phase))).unwrap();
        let peak = psi.density().peak();
        for (i, amp) in psi.amplitudes().iter().enumerate() {
            if amp.norm_sqr() > 1e-6 * peak {
                prop_assert!((a.component(0)[i] - b.component(0)[i]).abs() < 1e-10);
                prop_assert!((a.component(0)[i] - k).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn projective_distance_is_a_ray_metric(
        c1 in -3.0..3.0f64, c2 in -3.0..3.0f64, k in -2.0..2.0f64, phase in 0.0..std::f64::consts::TAU,
    ) {
        let g = grid_1d();
        let a = packet(&g, c1, 1.0, k);
        let b = packet(&g, c2, 1.3, -k);
        let d = projective_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(projective_distance(&a, &a.scaled(Complex64::from_polar(3.0, phase))).unwrap() < 1e-14);
        prop_assert!((d - projective_distance(&b, &a).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn quantile_inverts_cdf(nodes in prop::collection::vec(0.0..5.0f64, 16..40), u in 0.0..0.999f64) {
        prop_assume!(nodes.iter().sum::<f64>() > 1e-3);
        let p = PiecewiseLinear::new(-1.0, 0.25, nodes).unwrap();
        let x = p.quantile(u);
        prop_assert!((p.cdf(x) - u).abs() < 1e-9);
        prop_assert!(p.quantile((u + 0.0005).min(0.9999)) >= x);
    }

    #[test]
    fn sampling_is_seeded(seed in any::<u64>(), c in -3.0..3.0f64) {
        let g = grid_1d();
        let d = packet(&g, c, 1.0, 0.0).density();
        let a = sample_equilibrium(&d, 64, seed).unwrap();
        let b = sample_equilibrium(&d, 64, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|q| g.contains(q)));
        let xs: Vec<f64> = a.iter().map(|q| q[0]).collect();
        let ks = ks_statistic(&xs, |x| (x + 12.0) / 24.0);
        prop_assert!((0.0..=1.0).contains(&ks));
    }
}
