//! Fields on the disk that can be evaluated anywhere, so collar integrals
//! and fine Cartesian sweeps never need a stored grid.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{Grid, LacunarySpec, SampledField, SmoothSpectrum};
use crate::modulus::{seminorm_profile_with, Modulus};
use crate::par::Exec;

use super::eta;

/// A vector field on the closed unit disk.
pub trait VectorSource: Sync {
    fn eval(&self, x: [f64; 2]) -> [f64; 2];

    /// Values at `(x0, x1_start + j·dx)` for `j < out0.len()`.
    fn eval_row(&self, x0: f64, x1_start: f64, dx: f64, out0: &mut [f64], out1: &mut [f64]) {
        for (j, (a, b)) in out0.iter_mut().zip(out1.iter_mut()).enumerate() {
            let v = self.eval([x0, x1_start + j as f64 * dx]);
            *a = v[0];
            *b = v[1];
        }
    }

    /// A bound on `|∇w|` over the disk, if one is known.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
}

/// A bounded scalar field (the pressure stand-in).
pub trait ScalarSource: Sync {
    fn eval(&self, x: [f64; 2]) -> f64;

    /// A bound on `sup |p|`, if one is known.
    fn sup_bound(&self) -> Option<f64> {
        None
    }
}

impl ScalarSource for SmoothSpectrum {
    fn eval(&self, x: [f64; 2]) -> f64 {
        SmoothSpectrum::eval(self, x, 0)
    }

    fn sup_bound(&self) -> Option<f64> {
        Some(self.abs_sum(0))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl VectorSource for ZeroField {
    fn eval(&self, _: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

impl ScalarSource for ZeroField {
    fn eval(&self, _: [f64; 2]) -> f64 {
        0.0
    }

    fn sup_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Rigid rotation `w = (−x₁, x₀)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RotationField;

impl VectorSource for RotationField {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        [-x[1], x[0]]
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Closure-backed vector field.
pub struct FnField<F>(F);

impl<F: Fn([f64; 2]) -> [f64; 2] + Sync> FnField<F> {
    pub fn new(f: F) -> Self {
        FnField(f)
    }
}

impl<F: Fn([f64; 2]) -> [f64; 2] + Sync> VectorSource for FnField<F> {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        (self.0)(x)
    }
}

/// `w = g(r) cos ϑ · x/r`, with `g` cut off smoothly near the origin by
/// `η(2r)`. Tangential on the boundary when `g(1) = 0`.
pub struct RadialField<G> {
    profile: G,
}

impl<G: Fn(f64) -> f64 + Sync> RadialField<G> {
    pub fn new(profile: G) -> Self {
        RadialField { profile }
    }
}

impl RadialField<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    /// Profile `m(min(1−r, s_max))`: the radial component grows like the
    /// modulus away from the boundary, which makes the collar estimate
    /// nearly sharp.
    pub fn near_extremal(m: Modulus) -> Self {
        let s_max = m.s_max;
        RadialField::new(Box::new(move |r: f64| {
            let d = (1.0 - r).min(s_max);
            // |x| of a boundary point rounds to within a few ulp of 1
            if d <= 4.0 * f64::EPSILON {
                0.0
            } else {
                m.value(d)
            }
        }))
    }

    /// Profile `1 − r`: a smooth field vanishing linearly at the boundary.
    pub fn linear() -> Self {
        RadialField::new(Box::new(|r: f64| (1.0 - r).max(0.0)))
    }
}

impl<G: Fn(f64) -> f64 + Sync> VectorSource for RadialField<G> {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        let cut = eta(2.0 * r);
        if cut == 0.0 || r > 1.0 {
            return [0.0, 0.0];
        }
        let a = (self.profile)(r) * cut * x[0] / (r * r);
        [a * x[0], a * x[1]]
    }
}

/// Divergence-free lacunary field vanishing in the normal direction on the
/// boundary: `u = ∇^⊥ψ` with `ψ = (1 − |x|²)·Ψ` and `Ψ` the lacunary stream
/// function with wavevectors scaled by `scale`.
#[derive(Debug, Clone)]
pub struct LacunaryDisk {
    /// `(κ, amplitude, phase)` of `Ψ = Σ A sin(κ·x + φ)`.
    waves: Vec<([f64; 2], f64, f64)>,
}

/// Steps between exact re-evaluations of the phasor recurrence.
const RESYNC: usize = 256;

impl LacunaryDisk {
    pub fn new(spec: &LacunarySpec, scale: f64) -> Result<Self> {
        spec.validate()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("wavevector scale must be positive, got {scale}")));
        }
        let waves = spec
            .stream_waves()
            .into_iter()
            .map(|w| {
                (
                    [w.wavevector[0] * scale, w.wavevector[1] * scale],
                    w.amplitude / scale,
                    w.phase,
                )
            })
            .collect();
        Ok(LacunaryDisk { waves })
    }

    /// `(Ψ, ∂₀Ψ, ∂₁Ψ)` at `x`.
    fn stream(&self, x: [f64; 2]) -> (f64, f64, f64) {
        let mut acc = (0.0, 0.0, 0.0);
        for &(k, a, p) in &self.waves {
            let (s, c) = (k[0] * x[0] + k[1] * x[1] + p).sin_cos();
            acc.0 += a * s;
            acc.1 += a * k[0] * c;
            acc.2 += a * k[1] * c;
        }
        acc
    }

    fn velocity(x: [f64; 2], psi: (f64, f64, f64)) -> [f64; 2] {
        let q = 1.0 - x[0] * x[0] - x[1] * x[1];
        let d0 = -2.0 * x[0] * psi.0 + q * psi.1;
        let d1 = -2.0 * x[1] * psi.0 + q * psi.2;
        [d1, -d0]
    }
}

impl VectorSource for LacunaryDisk {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        Self::velocity(x, self.stream(x))
    }

    fn eval_row(&self, x0: f64, x1_start: f64, dx: f64, out0: &mut [f64], out1: &mut [f64]) {
        let n = out0.len();
        let mut psi = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut p1 = vec![0.0; n];
        for &(k, a, p) in &self.waves {
            let step = Complex64::from_polar(1.0, k[1] * dx);
            for start in (0..n).step_by(RESYNC) {
                let mut z = Complex64::from_polar(1.0, k[0] * x0 + k[1] * (x1_start + start as f64 * dx) + p);
                for j in start..(start + RESYNC).min(n) {
                    psi[j] += a * z.im;
                    p0[j] += a * k[0] * z.re;
                    p1[j] += a * k[1] * z.re;
                    z *= step;
                }
            }
        }
        for j in 0..n {
            let x = [x0, x1_start + j as f64 * dx];
            let v = Self::velocity(x, (psi[j], p0[j], p1[j]));
            out0[j] = v[0];
            out1[j] = v[1];
        }
    }

    /// `Σ A|κ|² + 4 Σ A|κ| + 2 Σ A`, from differentiating
    /// `(1−|x|²)∇^⊥Ψ − 2Ψ x^⊥` with `|x| ≤ 1`.
    fn lipschitz_bound(&self) -> Option<f64> {
        let (mut a2, mut a1, mut a0) = (0.0, 0.0, 0.0);
        for &(k, a, _) in &self.waves {
            let kk = k[0].hypot(k[1]);
            a2 += a.abs() * kk * kk;
            a1 += a.abs() * kk;
            a0 += a.abs();
        }
        Some(a2 + 4.0 * a1 + 2.0 * a0)
    }
}

/// Bilinear interpolation of a stored field on a box grid (zero outside).
pub struct SampledSource {
    field: SampledField,
}

impl SampledSource {
    pub fn new(field: SampledField) -> Result<Self> {
        if field.grid.is_periodic() || field.grid.dim != 2 {
            return Err(Error::Unsupported("disk sources need a 2-D box grid".into()));
        }
        Ok(SampledSource { field })
    }

    fn interp(&self, x: [f64; 2], c: usize) -> f64 {
        let g = &self.field.grid;
        let dx = g.spacing();
        let n = g.n;
        let fi = (x[0] - g.lower(0)) / dx - 0.5;
        let fj = (x[1] - g.lower(1)) / dx - 0.5;
        if !(fi >= 0.0 && fj >= 0.0 && fi <= (n - 1) as f64 && fj <= (n - 1) as f64) {
            return 0.0;
        }
        let (i, j) = ((fi as usize).min(n - 2), (fj as usize).min(n - 2));
        let (ti, tj) = (fi - i as f64, fj - j as f64);
        let v = |a: usize, b: usize| self.field.at(c, g.flatten([a, b]));
        (1.0 - ti) * ((1.0 - tj) * v(i, j) + tj * v(i, j + 1)) + ti * ((1.0 - tj) * v(i + 1, j) + tj * v(i + 1, j + 1))
    }
}

impl VectorSource for SampledSource {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        if self.field.components == 1 {
            return [self.interp(x, 0), 0.0];
        }
        [self.interp(x, 0), self.interp(x, 1)]
    }
}

impl ScalarSource for SampledSource {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self.interp(x, 0)
    }
}

/// Seminorm of a disk field over pairs at most `s_cap` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskSeminorm {
    /// Exact discrete value on the masked Cartesian sample.
    pub sampled: f64,
    /// `L · sup_{s ≤ Δ} s/m(s)`: covers separations below the sample
    /// spacing when a Lipschitz bound `L` is known (0 otherwise).
    pub tail: f64,
    pub value: f64,
    pub sample_spacing: f64,
}

/// Samples `w` on `n × n` cell centres of `[−hw, hw]²`, masks to the closed
/// disk, and takes the discrete seminorm with pairs capped at `s_cap`.
pub fn disk_seminorm(
    exec: Exec,
    w: &dyn VectorSource,
    m: &Modulus,
    n: usize,
    s_cap: f64,
    hw: f64,
) -> Result<DiskSeminorm> {
    let grid = Grid::boxed(&[-hw, -hw], &[hw, hw], n)?;
    let dx = grid.spacing();
    let mut values = vec![0.0; 2 * grid.len()];
    let (v0, v1) = values.split_at_mut(grid.len());
    for i in 0..n {
        let x0 = grid.coord(0, i);
        w.eval_row(
            x0,
            grid.coord(1, 0),
            dx,
            &mut v0[i * n..(i + 1) * n],
            &mut v1[i * n..(i + 1) * n],
        );
    }
    let mask: Vec<bool> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            x[0].hypot(x[1]) <= 1.0
        })
        .collect();
    for (i, inside) in mask.iter().enumerate() {
        if !inside {
            v0[i] = 0.0;
            v1[i] = 0.0;
        }
    }
    let field = SampledField::new(grid, 2, values)?.with_mask(mask)?;
    let capped = m.clone().with_s_max(s_cap)?;
    let sampled = seminorm_profile_with(exec, &field, &capped)?.value_within(s_cap);
    let tail = match w.lipschitz_bound() {
        Some(l) if l > 0.0 => {
            let top = dx.min(s_cap);
            let sup = (0..=400)
                .map(|i| top * 1e-6f64.powf(i as f64 / 400.0))
                .map(|s| s / m.value(s))
                .fold(0.0, f64::max);
            l * sup
        }
        _ => 0.0,
    };
    Ok(DiskSeminorm {
        sampled,
        tail,
        value: sampled.max(tail),
        sample_spacing: dx,
    })
}
