use std::f64::consts::PI;

use hologlab::fields::{gen_lacunary, Grid, LacunarySpec, SampledField};
use hologlab::modulus::{holog_seminorm, seminorm_profile_with, Modulus};
use hologlab::mollify::{
    delta_shift, grad_mollified_with, make_kernel, mollify_with, ConvPath, ExtensionMode, MollifierKernel,
};
use hologlab::par::Exec;

const P: ExtensionMode = ExtensionMode::Periodic;

fn bump(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Midpoint rule with a million cells for `∫_{-1}^{1} ψ`.
fn bump_mass_1d() -> f64 {
    let n = 1_000_000;
    let h = 2.0 / n as f64;
    (0..n).map(|i| bump(-1.0 + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

fn attenuation(k: &MollifierKernel, wave: [f64; 2]) -> f64 {
    k.offsets
        .iter()
        .zip(&k.weights)
        .map(|(o, w)| w * (wave[0] * o[0] as f64 * k.spacing + wave[1] * o[1] as f64 * k.spacing).cos())
        .sum()
}

fn rel_max_diff(a: &SampledField, b: &SampledField) -> f64 {
    let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.values
        .iter()
        .zip(&b.values)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

#[test]
fn centre_weight_matches_quadrature_of_the_bump() {
    let z = bump_mass_1d();
    let grid = Grid::periodic(1, 2048).unwrap();
    // the stencil is a Riemann sum of the bump, converging as the stencil widens
    for (cells, tol) in [(8usize, 1e-3), (32, 1e-6), (128, 1e-10)] {
        let eps = cells as f64 * grid.spacing();
        let k = make_kernel(eps, &grid).unwrap();
        assert_eq!(k.radius_cells, cells);
        let centre = *k.weights.last().unwrap();
        let expected = (-1.0f64).exp() / z * grid.spacing() / eps;
        assert!(
            (centre - expected).abs() / expected < tol,
            "{cells} cells: {centre} vs {expected}"
        );
    }
}

#[test]
fn sine_attenuation_matches_direct_sum() {
    let grid = Grid::periodic(1, 256).unwrap();
    let k = make_kernel(0.3, &grid).unwrap();
    for wave in [1.0, 3.0, 17.0] {
        let f = SampledField::from_fn(grid.clone(), 1, |x, _| (wave * x[0]).sin()).unwrap();
        let a = attenuation(&k, [wave, 0.0]);
        let expect = SampledField::from_fn(grid.clone(), 1, |x, _| a * (wave * x[0]).sin()).unwrap();
        for path in [ConvPath::Direct, ConvPath::Fft] {
            let got = mollify_with(Exec::Sequential, path, &f, &k, P).unwrap();
            assert!(rel_max_diff(&expect, &got) < 1e-12, "k={wave} {path:?}");
        }
    }
}

#[test]
fn sine_gradient_has_same_attenuation() {
    let grid = Grid::periodic(1, 512).unwrap();
    let k = make_kernel(0.2, &grid).unwrap();
    let f = SampledField::from_fn(grid.clone(), 1, |x, _| x[0].sin()).unwrap();
    let g = grad_mollified_with(Exec::Sequential, ConvPath::Direct, &f, &k, P).unwrap();
    // Σ g(y) sin(x − y) = −cos x · Σ g(y) sin y, the odd stencil killing the rest
    let b = -k
        .offsets
        .iter()
        .zip(&k.grad_weights)
        .map(|(o, w)| w[0] * (o[0] as f64 * k.spacing).sin())
        .sum::<f64>();
    let err = (0..grid.len()).fold(0.0f64, |m, i| m.max((g.values[i] - b * grid.point(i)[0].cos()).abs()));
    assert!(err < 1e-12, "{err}");
    // sampled ∇φ is not the exact derivative of the sampled φ, so b and the
    // mollifier attenuation agree only up to the Riemann-sum error
    let a = attenuation(&k, [1.0, 0.0]);
    assert!((b - a).abs() < 1e-4, "{b} vs {a}");
}

#[test]
fn fft_and_direct_paths_agree_in_two_dimensions() {
    let grid = Grid::periodic(2, 128).unwrap();
    let spec = LacunarySpec {
        alpha: 0.4,
        lambda: 0.0,
        base: 2,
        levels: 5,
        seed: 9,
        zero_phase: false,
    };
    let u = gen_lacunary(&spec, &grid).unwrap();
    let k = make_kernel(0.35, &grid).unwrap();
    let a = mollify_with(Exec::Sequential, ConvPath::Direct, &u, &k, P).unwrap();
    let b = mollify_with(Exec::Sequential, ConvPath::Fft, &u, &k, P).unwrap();
    assert!(rel_max_diff(&a, &b) < 1e-12);
    let ga = grad_mollified_with(Exec::Sequential, ConvPath::Direct, &u, &k, P).unwrap();
    let gb = grad_mollified_with(Exec::Sequential, ConvPath::Fft, &u, &k, P).unwrap();
    assert!(rel_max_diff(&ga, &gb) < 1e-12);
}

#[test]
fn mollify_is_linear() {
    let grid = Grid::periodic(2, 64).unwrap();
    let k = make_kernel(0.5, &grid).unwrap();
    let f = SampledField::from_fn(grid.clone(), 1, |x, _| (x[0] + 2.0 * x[1]).sin().exp()).unwrap();
    let g = SampledField::from_fn(grid.clone(), 1, |x, _| (3.0 * x[0]).cos() * x[1].sin()).unwrap();
    let lhs = mollify_with(
        Exec::Sequential,
        ConvPath::Auto,
        &f.combine(2.5, &g, -0.7).unwrap(),
        &k,
        P,
    )
    .unwrap();
    let mf = mollify_with(Exec::Sequential, ConvPath::Auto, &f, &k, P).unwrap();
    let mg = mollify_with(Exec::Sequential, ConvPath::Auto, &g, &k, P).unwrap();
    assert!(rel_max_diff(&lhs, &mf.combine(2.5, &mg, -0.7).unwrap()) < 1e-12);
}

#[test]
fn zero_extension_substitutes_zero_outside_the_box() {
    let grid = Grid::boxed(&[0.0, 0.0], &[1.0, 1.0], 64).unwrap();
    let k = make_kernel(4.0 * grid.spacing(), &grid).unwrap();
    let one = SampledField::from_fn(grid.clone(), 1, |_, _| 1.0).unwrap();
    let m = mollify_with(Exec::Sequential, ConvPath::Auto, &one, &k, ExtensionMode::ZeroExtend).unwrap();
    let centre = grid.flatten([32, 32]);
    let corner = grid.flatten([0, 0]);
    assert!((m.values[centre] - 1.0).abs() < 1e-14);
    // a quarter of a symmetric stencil plus the axes lies inside at a corner
    assert!(
        m.values[corner] > 0.25 && m.values[corner] < 0.5,
        "{}",
        m.values[corner]
    );
}

fn lacunary(alpha: f64, lambda: f64, seed: u64, grid: &Grid) -> SampledField {
    let spec = LacunarySpec {
        alpha,
        lambda,
        base: 2,
        levels: 6,
        seed,
        zero_phase: false,
    };
    gen_lacunary(&spec, grid).unwrap()
}

#[test]
fn shift_increments_respect_the_seminorm() {
    let grid = Grid::periodic(2, 256).unwrap();
    let m = Modulus::holog(1.0 / 3.0, 1.0).unwrap();
    let u = lacunary(1.0 / 3.0, 1.0, 4, &grid);
    let s = holog_seminorm(&u, &m).unwrap().value;
    for y in [[1i64, 0], [0, 3], [-2, 5], [7, 7]] {
        let d = delta_shift(&u, y);
        let len = grid.offset_length(y);
        assert!(d.max_abs() <= s * m.value(len) * (1.0 + 1e-12), "offset {y:?}");
    }
}

#[test]
fn pointwise_and_gradient_bounds_hold_on_lacunary_fields() {
    let grid = Grid::periodic(2, 256).unwrap();
    for (alpha, lambda) in [(1.0 / 3.0, 1.0), (1.0 / 3.0, 2.0), (0.4, 0.0)] {
        let m = Modulus::holog(alpha, lambda).unwrap();
        let u = lacunary(alpha, lambda, 21, &grid);
        let profile = seminorm_profile_with(Exec::default(), &u, &m).unwrap();
        let s = profile.value_within(f64::INFINITY);
        for eps in [0.1, 0.2, 0.4] {
            let k = make_kernel(eps, &grid).unwrap();
            let ue = mollify_with(Exec::default(), ConvPath::Auto, &u, &k, P).unwrap();
            let g = grad_mollified_with(Exec::default(), ConvPath::Auto, &u, &k, P).unwrap();
            let bound = m.value(eps) * profile.value_within(eps);
            let gbound = s * m.value(eps) * k.k1 / eps;
            for p in 0..grid.len() {
                let gap = (u.at(0, p) - ue.at(0, p)).hypot(u.at(1, p) - ue.at(1, p));
                assert!(gap <= bound * (1.0 + 1e-12), "({alpha},{lambda}) eps={eps}");
                let gn = (0..4).map(|c| g.at(c, p).powi(2)).sum::<f64>().sqrt();
                assert!(gn <= gbound * (1.0 + 1e-12), "({alpha},{lambda}) eps={eps}");
            }
        }
    }
}

#[test]
fn k1_approximates_the_gradient_mass() {
    // ∫|∇φ| over the unit disk for the normalised bump, by radial quadrature
    let n = 200_000;
    let h = 1.0 / n as f64;
    let (mut mass, mut slope) = (0.0, 0.0);
    for i in 0..n {
        let r = (i as f64 + 0.5) * h;
        let q = 1.0 - r * r;
        let psi = bump(r);
        mass += psi * 2.0 * PI * r * h;
        slope += 2.0 * r / (q * q) * psi * 2.0 * PI * r * h;
    }
    let grid = Grid::periodic(2, 512).unwrap();
    let k = make_kernel(24.0 * grid.spacing(), &grid).unwrap();
    assert!(
        (k.k1 - slope / mass).abs() / (slope / mass) < 1e-3,
        "{} vs {}",
        k.k1,
        slope / mass
    );
}
