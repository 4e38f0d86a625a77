//! Commutator decomposition of the mollified nonlinearity and the
//! resolved-scale energy flux `Π_ε = ∫ (u⊗u)^ε : ∇u^ε dx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, SampledField};
use crate::modulus::Modulus;
use crate::mollify::{mollify_with, ConvPath, ExtensionMode, MollifierKernel};
use crate::par::{self, Exec};
use crate::spectral::Spectral;

/// Rank-2 tensor field with `dim²` components, entry `(i, j)` stored as
/// component `i·dim + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: Grid,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl TensorField {
    fn zeros(grid: &Grid) -> Self {
        TensorField {
            grid: grid.clone(),
            dim: grid.dim,
            values: vec![0.0; grid.dim * grid.dim * grid.len()],
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        let len = self.grid.len();
        let c = i * self.dim + j;
        &self.values[c * len..(c + 1) * len]
    }

    fn entry_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let len = self.grid.len();
        let c = i * self.dim + j;
        &mut self.values[c * len..(c + 1) * len]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The three tensors of the identity
/// `(u⊗u)^ε − u^ε⊗u^ε = Σ_y w_y δ_y u⊗δ_y u − (u−u^ε)⊗(u−u^ε)`.
#[derive(Debug, Clone)]
pub struct CetDecomposition {
    pub lhs: TensorField,
    pub convex_term: TensorField,
    pub anchor_term: TensorField,
}

impl CetDecomposition {
    /// `max |lhs − (convex − anchor)|`.
    pub fn residual(&self) -> f64 {
        self.lhs
            .values
            .iter()
            .zip(&self.convex_term.values)
            .zip(&self.anchor_term.values)
            .fold(0.0, |m, ((l, c), a)| m.max((l - (c - a)).abs()))
    }
}

fn check_input(u: &SampledField, k: &MollifierKernel) -> Result<()> {
    u.require_vector()?;
    u.require_periodic()?;
    k.check_grid(&u.grid)
}

fn product_field(u: &SampledField, i: usize, j: usize) -> SampledField {
    let values = u.component(i).iter().zip(u.component(j)).map(|(a, b)| a * b).collect();
    SampledField {
        grid: u.grid.clone(),
        components: 1,
        values,
        divergence_free: false,
        mask: None,
    }
}

/// `(u_i u_j)^ε` for `i ≤ j`, mirrored into a full tensor.
fn mollified_products(exec: Exec, u: &SampledField, k: &MollifierKernel) -> Result<TensorField> {
    let d = u.grid.dim;
    let mut t = TensorField::zeros(&u.grid);
    for i in 0..d {
        for j in i..d {
            let m = mollify_with(
                exec,
                ConvPath::Auto,
                &product_field(u, i, j),
                k,
                ExtensionMode::Periodic,
            )?;
            t.entry_mut(i, j).copy_from_slice(&m.values);
            if i != j {
                t.entry_mut(j, i).copy_from_slice(&m.values);
            }
        }
    }
    Ok(t)
}

/// All three terms of the decomposition, each computed independently.
/// The convex term reuses the kernel's offsets and weights, so the
/// identity holds to rounding.
pub fn cet_decomposition(u: &SampledField, k: &MollifierKernel) -> Result<CetDecomposition> {
    cet_decomposition_with(Exec::default(), u, k)
}

pub fn cet_decomposition_with(exec: Exec, u: &SampledField, k: &MollifierKernel) -> Result<CetDecomposition> {
    check_input(u, k)?;
    let d = u.grid.dim;
    let len = u.len();
    let ue = mollify_with(exec, ConvPath::Auto, u, k, ExtensionMode::Periodic)?;
    let mut lhs = mollified_products(exec, u, k)?;
    let mut anchor = TensorField::zeros(&u.grid);
    for i in 0..d {
        for j in 0..d {
            let (ui, uj) = (ue.component(i), ue.component(j));
            for (p, l) in lhs.entry_mut(i, j).iter_mut().enumerate() {
                *l -= ui[p] * uj[p];
            }
            let (ri, rj) = (u.component(i), u.component(j));
            for (p, a) in anchor.entry_mut(i, j).iter_mut().enumerate() {
                *a = (ri[p] - ui[p]) * (rj[p] - uj[p]);
            }
        }
    }
    let mut convex = TensorField::zeros(&u.grid);
    let points: Vec<usize> = (0..len).collect();
    let vals = convex_at(exec, u, k, &points);
    for (p, t) in vals.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                convex.entry_mut(i, j)[p] = t[i * 2 + j];
            }
        }
    }
    Ok(CetDecomposition {
        lhs,
        convex_term: convex,
        anchor_term: anchor,
    })
}

/// `Σ_y w_y δ_y u ⊗ δ_y u` at the listed nodes, as row-major 2×2 blocks.
fn convex_at(exec: Exec, u: &SampledField, k: &MollifierKernel, points: &[usize]) -> Vec<[f64; 4]> {
    let d = u.grid.dim;
    par::map(exec, points.len(), |p| {
        let x = points[p];
        let mut t = [0.0; 4];
        for (off, w) in k.offsets.iter().zip(&k.weights) {
            let y = u.grid.shifted(x, [-off[0], -off[1]]).expect("periodic shift");
            let mut dv = [0.0; 2];
            for (c, v) in dv.iter_mut().enumerate().take(d) {
                *v = u.at(c, y) - u.at(c, x);
            }
            for i in 0..d {
                for j in 0..d {
                    t[i * 2 + j] += w * dv[i] * dv[j];
                }
            }
        }
        t
    })
}

/// Decomposition residual on a strided subset of nodes, for grids where
/// the full `taps × points` convex sum is too costly. Returns
/// `(max residual, max |lhs|)` over the subset.
fn sampled_residual(
    exec: Exec,
    u: &SampledField,
    ue: &SampledField,
    lhs: &TensorField,
    k: &MollifierKernel,
    budget: usize,
) -> (f64, f64) {
    let len = u.len();
    let stride = (k.len() * len).div_ceil(budget.max(1)).max(1);
    let points: Vec<usize> = (0..len).step_by(stride).collect();
    let conv = convex_at(exec, u, k, &points);
    let d = u.grid.dim;
    let mut res: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (t, &x) in conv.iter().zip(&points) {
        for i in 0..d {
            for j in 0..d {
                let ri = u.at(i, x) - ue.at(i, x);
                let rj = u.at(j, x) - ue.at(j, x);
                let l = lhs.entry(i, j)[x];
                res = res.max((l - (t[i * 2 + j] - ri * rj)).abs());
                // lhs is a difference of two mollified products and carries their rounding
                let prod = ue.at(i, x) * ue.at(j, x);
                scale = scale
                    .max(l.abs())
                    .max(t[i * 2 + j].abs())
                    .max(prod.abs())
                    .max((l + prod).abs());
            }
        }
    }
    (res, scale)
}

/// One point of a flux sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSample {
    pub eps: f64,
    pub flux: f64,
    pub bound: f64,
    /// Decomposition residual relative to the largest entry of `(u⊗u)^ε`,
    /// `u^ε⊗u^ε` and the two sides of the identity.
    pub residual_identity: f64,
    pub null_flux: f64,
    /// `sup|u^ε|² · sup|∇u^ε| · volume`, the scale for `null_flux`.
    pub null_scale: f64,
    pub k1: f64,
}

/// Knobs for [`energy_flux_with`].
#[derive(Debug, Clone, Copy)]
pub struct FluxOptions {
    pub exec: Exec,
    /// Upper bound on `taps × nodes` for the decomposition residual; above
    /// it the residual is evaluated on a strided node subset.
    pub residual_budget: usize,
}

impl Default for FluxOptions {
    fn default() -> Self {
        FluxOptions {
            exec: Exec::default(),
            residual_budget: 50_000_000,
        }
    }
}

/// Energy flux at scale `k.eps` together with the null flux, the
/// decomposition residual and the predicted bound for seminorm `s`.
pub fn energy_flux(u: &SampledField, k: &MollifierKernel, m: &Modulus, s: f64) -> Result<FluxSample> {
    energy_flux_with(FluxOptions::default(), u, k, m, s)
}

/// Gradients of the mollified field are spectral derivatives of `u^ε`, so
/// the null flux vanishes to rounding for band-limited divergence-free
/// input. (The stencil gradient of [`crate::mollify::grad_mollified`] is a
/// different smoothing of `u` and leaves an O(10⁻³) null-flux defect.)
pub fn energy_flux_with(
    opts: FluxOptions,
    u: &SampledField,
    k: &MollifierKernel,
    m: &Modulus,
    s: f64,
) -> Result<FluxSample> {
    check_input(u, k)?;
    if !u.divergence_free {
        return Err(Error::Precondition(
            "energy flux needs a field flagged divergence-free".into(),
        ));
    }
    let exec = opts.exec;
    let d = u.grid.dim;
    let len = u.len();
    let ue = mollify_with(exec, ConvPath::Auto, u, k, ExtensionMode::Periodic)?;
    let grad = spectral_gradient(exec, &ue);
    let t = mollified_products(exec, u, k)?;
    let dv = u.grid.cell_volume();
    let flux = contract(exec, &t, &grad) * dv;
    let null_flux = par::sum(exec, len, |p| {
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += ue.at(i, p) * ue.at(j, p) * grad[i * d + j][p];
            }
        }
        acc
    }) * dv;
    let ue_max = ue.max_abs();
    let grad_max = grad.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let null_scale = ue_max * ue_max * grad_max * u.grid.volume();

    let mut lhs = t;
    for i in 0..d {
        for j in 0..d {
            let (ui, uj) = (ue.component(i), ue.component(j));
            for (p, l) in lhs.entry_mut(i, j).iter_mut().enumerate() {
                *l -= ui[p] * uj[p];
            }
        }
    }
    let (res, scale) = sampled_residual(exec, u, &ue, &lhs, k, opts.residual_budget);
    let residual_identity = if scale > 0.0 { res / scale } else { res };
    Ok(FluxSample {
        eps: k.eps,
        flux,
        bound: flux_bound(s, m, k.eps, k.k1)?,
        residual_identity,
        null_flux,
        null_scale,
        k1: k.k1,
    })
}

/// `grad[i·d + j] = ∂_j f_i` by spectral differentiation.
fn spectral_gradient(exec: Exec, f: &SampledField) -> Vec<Vec<f64>> {
    let d = f.grid.dim;
    let sp = Spectral::for_grid(&f.grid).with_exec(exec);
    let mut grad = Vec::with_capacity(d * d);
    for i in 0..d {
        let hat = sp.forward(f.component(i));
        for j in 0..d {
            grad.push(sp.derivative(&hat, j));
        }
    }
    grad
}

fn contract(exec: Exec, t: &TensorField, grad: &[Vec<f64>]) -> f64 {
    let d = t.dim;
    par::sum(exec, grad[0].len(), |p| {
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += t.entry(i, j)[p] * grad[i * d + j][p];
            }
        }
        acc
    })
}

/// The flux `∫ (u⊗u)^ε : ∇u^ε` alone, without the bound or the
/// decomposition check. Used along solver trajectories.
pub fn flux_only(exec: Exec, u: &SampledField, k: &MollifierKernel) -> Result<f64> {
    check_input(u, k)?;
    let ue = mollify_with(exec, ConvPath::Auto, u, k, ExtensionMode::Periodic)?;
    let grad = spectral_gradient(exec, &ue);
    let t = mollified_products(exec, u, k)?;
    Ok(contract(exec, &t, &grad) * u.grid.cell_volume())
}

/// `(1 + K₁) · m(ε)³ · S³ / ε`.
pub fn flux_bound(s: f64, m: &Modulus, eps: f64, k1: f64) -> Result<f64> {
    if !(s >= 0.0) || !(k1 >= 0.0) {
        return Err(Error::Domain(format!(
            "seminorm and K1 must be nonnegative, got {s} and {k1}"
        )));
    }
    let me = m.eval(eps)?;
    Ok((1.0 + k1) * me.powi(3) * s.powi(3) / eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mollify::make_kernel;

    #[test]
    fn bound_at_onsager_exponent_is_scale_free() {
        let m = Modulus::holder(1.0 / 3.0).unwrap();
        for eps in [0.01, 0.1, 0.4] {
            assert!((flux_bound(1.0, &m, eps, 1.0).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_half_exponent() {
        let m = Modulus::holder(0.5).unwrap();
        assert!((flux_bound(1.0, &m, 0.01, 1.0).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bound_rejects_out_of_range_eps() {
        let m = Modulus::holder(0.5).unwrap();
        assert!(flux_bound(1.0, &m, 0.6, 1.0).is_err());
    }

    #[test]
    fn constant_field_terms_vanish() {
        let g = Grid::periodic(2, 64).unwrap();
        let mut u = SampledField::from_fn(g.clone(), 2, |_, c| 1.0 + c as f64).unwrap();
        u.divergence_free = true;
        let k = make_kernel(5.0 * g.spacing(), &g).unwrap();
        let dec = cet_decomposition(&u, &k).unwrap();
        assert!(dec.lhs.max_abs() < 1e-13);
        assert_eq!(dec.convex_term.max_abs(), 0.0);
        assert!(dec.anchor_term.max_abs() < 1e-28);
        let s = energy_flux(&u, &k, &Modulus::holder(0.5).unwrap(), 0.0).unwrap();
        assert!(s.flux.abs() < 1e-12 && s.null_flux.abs() < 1e-12);
    }

    #[test]
    fn scalar_input_rejected() {
        let g = Grid::periodic(2, 32).unwrap();
        let u = SampledField::zeros(g.clone(), 1);
        let k = make_kernel(5.0 * g.spacing(), &g).unwrap();
        assert!(matches!(cet_decomposition(&u, &k), Err(Error::Arity(_))));
    }

    #[test]
    fn flux_needs_divergence_free_flag() {
        let g = Grid::periodic(2, 32).unwrap();
        let u = SampledField::zeros(g.clone(), 2);
        let k = make_kernel(5.0 * g.spacing(), &g).unwrap();
        let m = Modulus::holder(0.5).unwrap();
        assert!(matches!(energy_flux(&u, &k, &m, 1.0), Err(Error::Precondition(_))));
    }
}
