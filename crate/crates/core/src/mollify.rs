//! The ε-mollifier and discrete convolution on periodic and box grids.
//!
//! The bump `ψ(r) = exp(−1/(1−r²))` is sampled at grid offsets `|y| < ε`
//! and renormalised so the weights sum to one. Gradient weights sample
//! `∇[ψ(|y|/ε)]` with the same normalisation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, SampledField};
use crate::par::{self, Exec};
use crate::spectral::Spectral;

/// Smallest ε, in cells, accepted by [`make_kernel`].
pub const MIN_CELLS_PER_EPS: f64 = 4.0;

fn bump(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// `dψ/dr`.
fn bump_slope(r: f64) -> f64 {
    if r < 1.0 {
        let q = 1.0 - r * r;
        -2.0 * r / (q * q) * bump(r)
    } else {
        0.0
    }
}

/// Discrete, nonnegative, radially symmetric unit-mass stencil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierKernel {
    pub eps: f64,
    pub spacing: f64,
    pub dim: usize,
    pub radius_cells: usize,
    /// Offsets in cells. The centre offset comes last.
    pub offsets: Vec<[i64; 2]>,
    pub weights: Vec<f64>,
    pub grad_weights: Vec<[f64; 2]>,
    /// `ε · Σ |grad_weights|`, the discrete analogue of `∫|∇φ|`.
    pub k1: f64,
}

/// How a convolution treats nodes outside a box grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionMode {
    Periodic,
    ZeroExtend,
}

/// Which convolution algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvPath {
    /// Direct summation for small stencils, FFT otherwise (periodic only).
    Auto,
    Direct,
    Fft,
}

/// Builds the mollifier at scale `eps` for `grid`, enforcing `ε ≥ 4Δx`.
pub fn make_kernel(eps: f64, grid: &Grid) -> Result<MollifierKernel> {
    MollifierKernel::with_floor(eps, grid, MIN_CELLS_PER_EPS)
}

impl MollifierKernel {
    /// Like [`make_kernel`] with an explicit resolution floor in cells.
    /// Identity checks that hold for any stencil may lower the floor; bound
    /// checks must keep the default.
    pub fn with_floor(eps: f64, grid: &Grid, min_cells: f64) -> Result<Self> {
        let dx = grid.spacing();
        if !(eps < 1.0) {
            return Err(Error::Domain(format!("eps must be < 1, got {eps}")));
        }
        if !(eps >= min_cells * dx) {
            return Err(Error::Resolution(format!(
                "eps = {eps} is below the floor {min_cells}·dx = {}",
                min_cells * dx
            )));
        }
        let r = (eps / dx).floor() as i64;
        if grid.is_periodic() && 2 * r + 1 > grid.n as i64 {
            return Err(Error::Resolution(format!(
                "stencil of radius {r} cells does not fit on a {}-point periodic axis",
                grid.n
            )));
        }
        let mut offsets = Vec::new();
        let span = if grid.dim == 2 { -r..=r } else { 0..=0 };
        for a in -r..=r {
            for b in span.clone() {
                if a == 0 && b == 0 {
                    continue;
                }
                let d = ((a * a + b * b) as f64).sqrt() * dx;
                if d < eps {
                    offsets.push([a, b]);
                }
            }
        }
        offsets.push([0, 0]);
        let raw: Vec<f64> = offsets
            .iter()
            .map(|o| bump(((o[0] * o[0] + o[1] * o[1]) as f64).sqrt() * dx / eps))
            .collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let last = weights.len() - 1;
        let others: f64 = weights[..last].iter().sum();
        weights[last] = 1.0 - others;
        let grad_weights: Vec<[f64; 2]> = offsets
            .iter()
            .map(|o| {
                let len = ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt();
                if len == 0.0 {
                    return [0.0, 0.0];
                }
                let s = bump_slope(len * dx / eps) / (eps * total);
                [s * o[0] as f64 / len, s * o[1] as f64 / len]
            })
            .collect();
        let k1 = eps * grad_weights.iter().map(|g| g[0].hypot(g[1])).sum::<f64>();
        Ok(MollifierKernel {
            eps,
            spacing: dx,
            dim: grid.dim,
            radius_cells: r as usize,
            offsets,
            weights,
            grad_weights,
            k1,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim != self.dim || ((grid.spacing() - self.spacing) / self.spacing).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "kernel built for dim {} spacing {} but field has dim {} spacing {}",
                self.dim,
                self.spacing,
                grid.dim,
                grid.spacing()
            )));
        }
        Ok(())
    }

    /// Convolution symbol `Σ_y w(y) e^{-iξ·y}` on a periodic grid
    /// (real and even because the stencil is symmetric).
    pub fn symbol(&self, grid: &Grid, sp: &Spectral) -> Vec<Complex64> {
        taps_symbol(grid, sp, &self.offsets, &self.weights)
    }
}

fn taps_symbol(grid: &Grid, sp: &Spectral, offsets: &[[i64; 2]], taps: &[f64]) -> Vec<Complex64> {
    let mut arr = vec![Complex64::default(); grid.len()];
    let n = grid.n as i64;
    for (o, w) in offsets.iter().zip(taps) {
        let idx = grid.flatten([o[0].rem_euclid(n) as usize, o[1].rem_euclid(n) as usize]);
        arr[idx] += Complex64::new(*w, 0.0);
    }
    sp.forward_in_place(&mut arr);
    arr
}

fn check_mode(f: &SampledField, k: &MollifierKernel, mode: ExtensionMode) -> Result<()> {
    k.check_grid(&f.grid)?;
    match (mode, f.grid.is_periodic()) {
        (ExtensionMode::Periodic, true) | (ExtensionMode::ZeroExtend, false) => Ok(()),
        (ExtensionMode::ZeroExtend, true) => Err(Error::Config("zero extension applies only to box grids".into())),
        (ExtensionMode::Periodic, false) => Err(Error::Config("periodic mode needs a periodic grid".into())),
    }
}

/// Direct stencil sum `out(x) = Σ_y taps(y) · f(x − y)` for one component.
pub(crate) fn convolve_direct(exec: Exec, grid: &Grid, data: &[f64], offsets: &[[i64; 2]], taps: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    par::fill(exec, &mut out, |i, o| {
        let mut acc = 0.0;
        for (off, t) in offsets.iter().zip(taps) {
            if *t == 0.0 {
                continue;
            }
            if let Some(j) = grid.shifted(i, [-off[0], -off[1]]) {
                acc += t * data[j];
            }
        }
        *o = acc;
    });
    out
}

fn use_fft(path: ConvPath, k: &MollifierKernel, grid: &Grid) -> bool {
    match path {
        ConvPath::Direct => false,
        ConvPath::Fft => true,
        ConvPath::Auto => grid.is_periodic() && k.len() > 32,
    }
}

/// `u^ε = u ∗ φ_ε`, componentwise.
pub fn mollify(f: &SampledField, k: &MollifierKernel, mode: ExtensionMode) -> Result<SampledField> {
    mollify_with(Exec::default(), ConvPath::Auto, f, k, mode)
}

pub fn mollify_with(
    exec: Exec,
    path: ConvPath,
    f: &SampledField,
    k: &MollifierKernel,
    mode: ExtensionMode,
) -> Result<SampledField> {
    check_mode(f, k, mode)?;
    let mut out = f.clone();
    if use_fft(path, k, &f.grid) {
        if !f.grid.is_periodic() {
            return Err(Error::Unsupported("FFT convolution needs a periodic grid".into()));
        }
        let sp = Spectral::for_grid(&f.grid).with_exec(exec);
        let sym = k.symbol(&f.grid, &sp);
        for c in 0..f.components {
            let mut hat = sp.forward(f.component(c));
            hat.iter_mut().zip(&sym).for_each(|(h, s)| *h *= s.re);
            out.component_mut(c).copy_from_slice(&sp.inverse_real(hat));
        }
    } else {
        for c in 0..f.components {
            let v = convolve_direct(exec, &f.grid, f.component(c), &k.offsets, &k.weights);
            out.component_mut(c).copy_from_slice(&v);
        }
    }
    Ok(out)
}

/// `∇(f ∗ φ_ε)` obtained by convolving with the gradient stencil.
///
/// The output has `components · dim` components ordered
/// `∂_0 f_0, ∂_1 f_0, ∂_0 f_1, ...` (component-major).
pub fn grad_mollified(f: &SampledField, k: &MollifierKernel, mode: ExtensionMode) -> Result<SampledField> {
    grad_mollified_with(Exec::default(), ConvPath::Auto, f, k, mode)
}

pub fn grad_mollified_with(
    exec: Exec,
    path: ConvPath,
    f: &SampledField,
    k: &MollifierKernel,
    mode: ExtensionMode,
) -> Result<SampledField> {
    check_mode(f, k, mode)?;
    let dim = f.grid.dim;
    let mut values = Vec::with_capacity(f.values.len() * dim);
    let taps: Vec<Vec<f64>> = (0..dim)
        .map(|a| k.grad_weights.iter().map(|g| g[a]).collect())
        .collect();
    if use_fft(path, k, &f.grid) {
        if !f.grid.is_periodic() {
            return Err(Error::Unsupported("FFT convolution needs a periodic grid".into()));
        }
        let sp = Spectral::for_grid(&f.grid).with_exec(exec);
        let syms: Vec<_> = taps.iter().map(|t| taps_symbol(&f.grid, &sp, &k.offsets, t)).collect();
        for c in 0..f.components {
            let hat = sp.forward(f.component(c));
            for sym in &syms {
                let prod: Vec<Complex64> = hat.iter().zip(sym).map(|(h, s)| h * s).collect();
                values.extend(sp.inverse_real(prod));
            }
        }
    } else {
        for c in 0..f.components {
            for t in &taps {
                values.extend(convolve_direct(exec, &f.grid, f.component(c), &k.offsets, t));
            }
        }
    }
    // Components beyond `dim` only exist to carry the tensor; bypass the
    // arity check of `SampledField::new`.
    Ok(SampledField {
        grid: f.grid.clone(),
        components: f.components * dim,
        values,
        divergence_free: false,
        mask: f.mask.clone(),
    })
}

/// `δ_y f(x) = f(x − y) − f(x)` with periodic wrap or zero extension.
pub fn delta_shift(f: &SampledField, y: [i64; 2]) -> SampledField {
    let mut out = f.clone();
    out.divergence_free = false;
    let len = f.len();
    for c in 0..f.components {
        for i in 0..len {
            let back = f.grid.shifted(i, [-y[0], -y[1]]).map_or(0.0, |j| f.at(c, j));
            out.values[c * len + i] = back - f.at(c, i);
        }
    }
    out
}
