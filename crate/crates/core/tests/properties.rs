use approx::assert_relative_eq;
use proptest::prelude::*;

use hologlab::commutator::cet_decomposition;
use hologlab::fields::{gen_smooth_random, Grid, SampledField, SmoothSpec};
use hologlab::harness::{fit_scaling_with, FitModel};
use hologlab::modulus::{holog_seminorm, Modulus};
use hologlab::mollify::{make_kernel, mollify, ExtensionMode};

fn smooth(seed: u64, components: usize) -> SampledField {
    let spec = SmoothSpec {
        seed,
        decay_rate: 2.5,
        components,
        kmax: Some(8),
    };
    gen_smooth_random(&spec, &Grid::periodic(2, 32).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn holog_modulus_is_increasing(alpha in 0.05f64..0.95, lambda in 0.0f64..3.0, a in 1e-6f64..0.49, b in 1e-6f64..0.49) {
        let m = Modulus::holog(alpha, lambda).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(m.value(lo) <= m.value(hi));
    }

    #[test]
    fn seminorm_is_absolutely_homogeneous(seed in 0u64..1000, c in -5.0f64..5.0) {
        let f = smooth(seed, 1);
        let m = Modulus::holder(0.5).unwrap();
        let s = holog_seminorm(&f, &m).unwrap().value;
        let sc = holog_seminorm(&f.scaled(c), &m).unwrap().value;
        assert_relative_eq!(sc, c.abs() * s, max_relative = 1e-12, epsilon = 1e-300);
    }

    #[test]
    fn seminorm_ignores_constant_shifts(seed in 0u64..1000, shift in -3.0f64..3.0) {
        let f = smooth(seed, 1);
        let g = SampledField::new(f.grid.clone(), 1, f.values.iter().map(|v| v + shift).collect()).unwrap();
        let m = Modulus::holog(1.0 / 3.0, 1.0).unwrap();
        let (a, b) = (holog_seminorm(&f, &m).unwrap().value, holog_seminorm(&g, &m).unwrap().value);
        assert_relative_eq!(a, b, max_relative = 1e-9);
    }

    #[test]
    fn mollify_preserves_mean_and_contracts_sup(seed in 0u64..1000, eps in 0.8f64..0.99) {
        let f = smooth(seed, 1);
        let k = make_kernel(eps, &f.grid).unwrap();
        let g = mollify(&f, &k, ExtensionMode::Periodic).unwrap();
        assert_relative_eq!(g.mean(0), f.mean(0), epsilon = 1e-12 * f.max_abs().max(1.0));
        prop_assert!(g.max_abs() <= f.max_abs() * (1.0 + 1e-12));
    }

    #[test]
    fn cet_identity_holds_for_any_vector_field(seed in 0u64..1000, eps in 0.8f64..0.99) {
        let u = smooth(seed, 2);
        let k = make_kernel(eps, &u.grid).unwrap();
        let d = cet_decomposition(&u, &k).unwrap();
        prop_assert!(d.residual() <= 1e-12 * u.max_abs().powi(2));
    }

    #[test]
    fn fit_recovers_random_exponents(p in -2.0f64..2.0, q in -4.0f64..4.0, c in -3.0f64..3.0) {
        let pts: Vec<(f64, f64)> = (1..=7)
            .map(|k| {
                let s = 0.5f64.powi(k);
                (s, (c + p * s.ln() + q * (1.0 / s).ln().ln()).exp())
            })
            .collect();
        let f = fit_scaling_with(&pts, FitModel::PowerLog).unwrap();
        prop_assert!((f.p - p).abs() < 1e-9 && (f.q - q).abs() < 1e-9 && (f.c - c).abs() < 1e-9, "{:?}", f);
    }
}
