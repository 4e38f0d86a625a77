//! Unit-disk geometry, the interior cutoff `θ_h = η(d/h)`, the collar
//! estimates for tangential fields, and the cutoff functionals of the
//! bounded-domain energy argument.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulus::Modulus;
use crate::par::{self, Exec};

mod jsweep;
mod source;

pub use jsweep::{coupling_eps, j_sweep, JOptions, JRecord};
pub use source::{
    disk_seminorm, DiskSeminorm, FnField, LacunaryDisk, RadialField, RotationField, SampledSource, ScalarSource,
    VectorSource, ZeroField,
};

/// Width of the collar on which `σ(x)` is unique.
pub const H0: f64 = 0.5;

/// The unit disk embedded in the box `[−half_width, half_width]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskDomain {
    pub h0: f64,
    pub half_width: f64,
}

impl Default for DiskDomain {
    fn default() -> Self {
        DiskDomain {
            h0: H0,
            half_width: 1.5,
        }
    }
}

fn bump_t(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// The smooth step `η(s) = ψ(2s−1) / (ψ(2s−1) + ψ(2−2s))`, `ψ(t) = e^{−1/t}`.
pub fn eta(s: f64) -> f64 {
    if s <= 0.5 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let (a, b) = (bump_t(2.0 * s - 1.0), bump_t(2.0 - 2.0 * s));
        a / (a + b)
    }
}

pub fn eta_prime(s: f64) -> f64 {
    if s <= 0.5 || s >= 1.0 {
        return 0.0;
    }
    let (ta, tb) = (2.0 * s - 1.0, 2.0 - 2.0 * s);
    let (a, b) = (bump_t(ta), bump_t(tb));
    2.0 * (a / (ta * ta) * b + a * b / (tb * tb)) / ((a + b) * (a + b))
}

/// `‖η′‖_∞`, measured once by dense sampling of `(½, 1)` followed by a
/// golden-section refinement around the best sample.
pub fn eta_prime_sup() -> f64 {
    static SUP: OnceLock<f64> = OnceLock::new();
    *SUP.get_or_init(|| {
        const N: usize = 1_000_000;
        let step = 0.5 / N as f64;
        let (mut best_s, mut best) = (0.75, eta_prime(0.75));
        for i in 1..N {
            let s = 0.5 + i as f64 * step;
            let v = eta_prime(s);
            if v > best {
                best = v;
                best_s = s;
            }
        }
        let (mut lo, mut hi) = (best_s - step, best_s + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let (c, d) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if eta_prime(c) > eta_prime(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        best.max(eta_prime(0.5 * (lo + hi)))
    })
}

/// Distance to the boundary, nearest boundary point and `∇d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskPoint {
    pub d: f64,
    pub sigma: [f64; 2],
    pub grad_d: [f64; 2],
}

/// Geometry of a collar point `x` (`1 − h₀ ≤ |x| ≤ 1`).
pub fn disk_geometry(x: [f64; 2]) -> Result<DiskPoint> {
    let r = x[0].hypot(x[1]);
    if !(1.0 - H0..=1.0).contains(&r) {
        return Err(Error::Domain(format!(
            "point at radius {r} lies outside the collar [{}, 1] where σ is defined",
            1.0 - H0
        )));
    }
    let n = [x[0] / r, x[1] / r];
    Ok(DiskPoint {
        d: 1.0 - r,
        sigma: n,
        grad_d: [-n[0], -n[1]],
    })
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h < H0.min(1.0)) {
        return Err(Error::Domain(format!("h must lie in (0, {}), got {h}", H0.min(1.0))));
    }
    Ok(())
}

/// `θ_h(x) = η(d(x)/h)`, zero outside the disk.
pub fn theta_h(x: [f64; 2], h: f64) -> Result<f64> {
    check_h(h)?;
    Ok(theta_unchecked(x, h))
}

#[inline]
pub(crate) fn theta_unchecked(x: [f64; 2], h: f64) -> f64 {
    let r = x[0].hypot(x[1]);
    if r >= 1.0 {
        0.0
    } else {
        eta((1.0 - r) / h)
    }
}

/// `∇θ_h(x) = −η′(d/h)/h · x/|x|`.
#[inline]
pub(crate) fn theta_grad(x: [f64; 2], h: f64) -> [f64; 2] {
    let r = x[0].hypot(x[1]);
    if r >= 1.0 || r <= 1.0 - h {
        return [0.0, 0.0];
    }
    let c = -eta_prime((1.0 - r) / h) / (h * r);
    [c * x[0], c * x[1]]
}

/// `|Ω_h| = π(1 − (1−h)²)`.
pub fn collar_area(h: f64) -> f64 {
    std::f64::consts::PI * (1.0 - (1.0 - h) * (1.0 - h))
}

/// Midpoint rule on the collar `1−h < r < 1` in polar coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PolarQuadrature {
    pub h: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl PolarQuadrature {
    pub fn radius(&self, i: usize) -> f64 {
        1.0 - self.h + (i as f64 + 0.5) * self.h / self.n_r as f64
    }

    pub fn angle(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * std::f64::consts::TAU / self.n_theta as f64
    }

    /// Weight `r Δr Δθ` of a node at radius `r`.
    pub fn weight(&self, r: f64) -> f64 {
        r * self.h / self.n_r as f64 * std::f64::consts::TAU / self.n_theta as f64
    }

    /// Quadrature of the collar indicator (exact for the midpoint rule).
    pub fn area(&self) -> f64 {
        (0..self.n_r).map(|i| self.weight(self.radius(i))).sum::<f64>() * self.n_theta as f64
    }
}

/// Resolution knobs of [`lemma_sweep`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LemmaOptions {
    /// Radial nodes across the collar (at least 64).
    pub nodes_across: usize,
    pub n_theta: usize,
    /// Points per axis of the masked Cartesian sample used for `S_w`.
    pub sample_n: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        LemmaOptions {
            nodes_across: 128,
            n_theta: 1024,
            sample_n: 512,
            exec: Exec::default(),
        }
    }
}

/// One collar-estimate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaRecord {
    pub h: f64,
    pub sup_value: f64,
    pub integral_value: f64,
    pub bound_sup: f64,
    pub bound_integral: f64,
    pub seminorm: f64,
    pub collar_area: f64,
    pub eta_prime_sup: f64,
}

/// Largest boundary-normal component `|w·n|` over `n_theta` boundary points,
/// failing if it exceeds `1e−8 · max|w|` (sampled on the same points and a
/// radial sweep).
pub fn check_tangential(w: &dyn VectorSource, n_theta: usize) -> Result<f64> {
    let mut normal: f64 = 0.0;
    let mut wmax: f64 = 0.0;
    for j in 0..n_theta {
        let t = (j as f64 + 0.5) * std::f64::consts::TAU / n_theta as f64;
        let n = [t.cos(), t.sin()];
        let v = w.eval(n);
        normal = normal.max((v[0] * n[0] + v[1] * n[1]).abs());
        for k in 1..=16 {
            let r = k as f64 / 16.0;
            let v = w.eval([r * n[0], r * n[1]]);
            wmax = wmax.max(v[0].hypot(v[1]));
        }
    }
    if normal > 1e-8 * wmax {
        return Err(Error::Precondition(format!(
            "field is not tangential on the boundary: max |w·n| = {normal:e} (max |w| = {wmax:e})"
        )));
    }
    Ok(normal)
}

/// Measures `sup |w·∇θ_h|` and `∫ |w·∇θ_h|` on the collar for each `h`,
/// with bounds `‖η′‖_∞ S_w m(h)/h` and that times `|Ω_h|`.
///
/// `S_w` is the larger of the masked Cartesian seminorm over pairs at most
/// `max h` apart and the ratio `|w(x) − w(σ(x))| / m(d(x))` over the
/// quadrature nodes; both are sub-suprema of the continuum seminorm.
pub fn lemma_sweep(w: &dyn VectorSource, m: &Modulus, hs: &[f64], opts: &LemmaOptions) -> Result<Vec<LemmaRecord>> {
    if hs.is_empty() {
        return Err(Error::Config("lemma sweep needs at least one h".into()));
    }
    for &h in hs {
        check_h(h)?;
        m.eval(h)?;
    }
    if opts.nodes_across < 64 {
        return Err(Error::Resolution(format!(
            "collar quadrature needs at least 64 radial nodes, got {}",
            opts.nodes_across
        )));
    }
    check_tangential(w, opts.n_theta)?;
    let h_max = hs.iter().cloned().fold(0.0, f64::max);
    let sampled = disk_seminorm(opts.exec, w, m, opts.sample_n, h_max, DiskDomain::default().half_width)?.sampled;
    let quads: Vec<PolarQuadrature> = hs
        .iter()
        .map(|&h| PolarQuadrature {
            h,
            n_r: opts.nodes_across,
            n_theta: opts.n_theta,
        })
        .collect();
    // (sup, integral, boundary-pair ratio) per h
    let stats: Vec<(f64, f64, f64)> = quads
        .iter()
        .map(|q| {
            let rows = par::map(opts.exec, q.n_r, |i| {
                let r = q.radius(i);
                let d = 1.0 - r;
                let wt = q.weight(r);
                let ep = eta_prime(d / q.h) / q.h;
                let md = m.value(d);
                let (mut sup, mut int, mut ratio) = (0.0f64, 0.0, 0.0f64);
                for j in 0..q.n_theta {
                    let t = q.angle(j);
                    let (c, s) = (t.cos(), t.sin());
                    let x = [r * c, r * s];
                    let v = w.eval(x);
                    let ws = w.eval([c, s]);
                    // w·∇θ = −η′(d/h)/h · w·x/|x|
                    let val = (ep * (v[0] * c + v[1] * s)).abs();
                    sup = sup.max(val);
                    int += val * wt;
                    ratio = ratio.max((v[0] - ws[0]).hypot(v[1] - ws[1]) / md);
                }
                (sup, int, ratio)
            });
            rows.into_iter()
                .fold((0.0f64, 0.0, 0.0f64), |a, b| (a.0.max(b.0), a.1 + b.1, a.2.max(b.2)))
        })
        .collect();
    let seminorm = stats.iter().map(|s| s.2).fold(sampled, f64::max);
    let ep = eta_prime_sup();
    Ok(hs
        .iter()
        .zip(&stats)
        .map(|(&h, &(sup, int, _))| {
            let bound_sup = ep * seminorm * m.value(h) / h;
            LemmaRecord {
                h,
                sup_value: sup,
                integral_value: int,
                bound_sup,
                bound_integral: bound_sup * collar_area(h),
                seminorm,
                collar_area: collar_area(h),
                eta_prime_sup: ep,
            }
        })
        .collect())
}
