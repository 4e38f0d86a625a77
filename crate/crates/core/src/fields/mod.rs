//! Sampled fields on uniform grids and the deterministic generators that
//! produce the laboratory's test fields.

mod gen;
mod io;
mod leray;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gen::{
    gen_lacunary, gen_smooth_random, pressure_standin, LacunarySpec, SmoothSpec, SmoothSpectrum, PHASE_GENERATOR,
};
pub use io::{load_field, save_field, FieldSidecar, FIELD_MAGIC};
pub use leray::{project_divfree, spectral_divergence_max};

/// Where a grid lives. Periodic grids cover `[0, 2π)` per axis with nodes at
/// `i·2π/n`; box grids are cell-centred, with nodes at `lower + (i + ½)Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Periodic,
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

/// A uniform grid with `n` points per axis in 1 or 2 dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub domain: Domain,
}

impl Grid {
    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        let g = Grid {
            dim,
            n,
            domain: Domain::Periodic,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn boxed(lower: &[f64], upper: &[f64], n: usize) -> Result<Self> {
        let g = Grid {
            dim: lower.len(),
            n,
            domain: Domain::Box {
                lower: lower.to_vec(),
                upper: upper.to_vec(),
            },
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {}", self.dim)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 points per axis, got {}",
                self.n
            )));
        }
        if let Domain::Box { lower, upper } = &self.domain {
            if lower.len() != self.dim || upper.len() != self.dim {
                return Err(Error::Config("box corners must match the grid dimension".into()));
            }
            if lower
                .iter()
                .zip(upper)
                .any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite())
            {
                return Err(Error::Config(format!("degenerate box {lower:?}..{upper:?}")));
            }
            let widths: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
            if widths.iter().any(|w| ((w - widths[0]) / widths[0]).abs() > 1e-12) {
                return Err(Error::Config("box grids must have square cells".into()));
            }
        }
        Ok(())
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.domain, Domain::Periodic)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of one axis of the domain.
    pub fn extent(&self) -> f64 {
        match &self.domain {
            Domain::Periodic => TAU,
            Domain::Box { lower, upper } => upper[0] - lower[0],
        }
    }

    pub fn spacing(&self) -> f64 {
        self.extent() / self.n as f64
    }

    /// Volume of one grid cell (the Riemann-sum weight).
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.extent().powi(self.dim as i32)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        match &self.domain {
            Domain::Periodic => 0.0,
            Domain::Box { lower, .. } => lower[axis],
        }
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        match &self.domain {
            Domain::Periodic => i as f64 * self.spacing(),
            Domain::Box { lower, .. } => lower[axis] + (i as f64 + 0.5) * self.spacing(),
        }
    }

    /// Multi-index of a flat index (axis 0 varies slowest).
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    pub fn flatten(&self, i: [usize; 2]) -> usize {
        if self.dim == 1 {
            i[0]
        } else {
            i[0] * self.n + i[1]
        }
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let m = self.unflatten(idx);
        let x0 = self.coord(0, m[0]);
        let x1 = if self.dim == 2 { self.coord(1, m[1]) } else { 0.0 };
        [x0, x1]
    }

    /// Flat index of the node displaced by `off` cells, or `None` when it
    /// leaves a box grid. Periodic grids wrap.
    #[inline]
    pub fn shifted(&self, idx: usize, off: [i64; 2]) -> Option<usize> {
        let n = self.n as i64;
        let m = self.unflatten(idx);
        let mut out = [0usize; 2];
        for a in 0..self.dim {
            let j = m[a] as i64 + off[a];
            out[a] = if self.is_periodic() {
                j.rem_euclid(n) as usize
            } else if (0..n).contains(&j) {
                j as usize
            } else {
                return None;
            };
        }
        Some(self.flatten(out))
    }

    /// Distance covered by an offset of whole cells, using the periodic
    /// (minimum image) metric on periodic grids.
    pub fn offset_length(&self, off: [i64; 2]) -> f64 {
        let n = self.n as i64;
        let mut s = 0.0;
        for &o in off.iter().take(self.dim) {
            let c = if self.is_periodic() {
                let r = o.rem_euclid(n);
                r.min(n - r)
            } else {
                o.abs()
            };
            s += (c as f64).powi(2);
        }
        s.sqrt() * self.spacing()
    }
}

/// A scalar or vector field sampled on a [`Grid`].
///
/// Values are stored component-major: component `c` occupies
/// `values[c·len .. (c+1)·len]`, each plane in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: Grid,
    pub components: usize,
    pub values: Vec<f64>,
    pub divergence_free: bool,
    /// Nodes belonging to the physical domain on box grids (e.g. the disk).
    /// Seminorms only pair masked-in nodes.
    pub mask: Option<Vec<bool>>,
}

impl SampledField {
    pub fn new(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if components != 1 && components != grid.dim {
            return Err(Error::Arity(format!(
                "a field on a {}-D grid has 1 or {} components, got {components}",
                grid.dim, grid.dim
            )));
        }
        if values.len() != components * grid.len() {
            return Err(Error::Config(format!(
                "expected {} values, got {}",
                components * grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at index {i}")));
        }
        Ok(SampledField {
            grid,
            components,
            values,
            divergence_free: false,
            mask: None,
        })
    }

    pub fn zeros(grid: Grid, components: usize) -> Self {
        let len = grid.len() * components;
        SampledField {
            grid,
            components,
            values: vec![0.0; len],
            divergence_free: false,
            mask: None,
        }
    }

    /// Samples `f(point, component)` at every node.
    pub fn from_fn(grid: Grid, components: usize, f: impl Fn([f64; 2], usize) -> f64) -> Result<Self> {
        let len = grid.len();
        let mut values = Vec::with_capacity(len * components);
        for c in 0..components {
            for i in 0..len {
                values.push(f(grid.point(i), c));
            }
        }
        SampledField::new(grid, components, values)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.grid.len() {
            return Err(Error::Config("mask length must equal the number of grid nodes".into()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.len();
        &mut self.values[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, idx: usize) -> f64 {
        self.values[c * self.len() + idx]
    }

    pub fn inside(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_abs(&self) -> f64 {
        (0..self.len())
            .map(|i| (0..self.components).map(|c| self.at(c, i).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Grid quadrature of `|f|²`.
    pub fn l2_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self, c: usize) -> f64 {
        self.component(c).iter().sum::<f64>() / self.len() as f64
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: f64, other: &SampledField, b: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(x, y)| *x = a * *x + b * y);
        out.divergence_free = self.divergence_free && other.divergence_free;
        Ok(out)
    }

    pub fn check_same_shape(&self, other: &SampledField) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::Config(
                "fields live on different grids or have different arity".into(),
            ));
        }
        Ok(())
    }

    pub fn require_vector(&self) -> Result<()> {
        if self.components != self.grid.dim || self.components < 2 {
            return Err(Error::Arity(format!(
                "expected a {}-component vector field, got {} component(s)",
                self.grid.dim.max(2),
                self.components
            )));
        }
        Ok(())
    }

    pub fn require_periodic(&self) -> Result<()> {
        if !self.grid.is_periodic() {
            return Err(Error::Unsupported("operation requires a periodic grid".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_offsets_use_minimum_image() {
        let g = Grid::periodic(1, 16).unwrap();
        assert_eq!(g.offset_length([15, 0]), g.spacing());
        assert_eq!(g.shifted(0, [-1, 0]), Some(15));
    }

    #[test]
    fn box_shift_leaves_grid() {
        let g = Grid::boxed(&[-1.0, -1.0], &[1.0, 1.0], 8).unwrap();
        assert_eq!(g.shifted(0, [-1, 0]), None);
        assert_eq!(g.shifted(0, [1, 1]), Some(9));
        assert!((g.coord(0, 0) + 0.875).abs() < 1e-15);
    }

    #[test]
    fn wrong_arity_rejected() {
        let g = Grid::periodic(2, 4).unwrap();
        assert!(matches!(SampledField::new(g, 3, vec![0.0; 48]), Err(Error::Arity(_))));
    }
}
