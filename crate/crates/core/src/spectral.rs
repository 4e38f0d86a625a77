//! FFT plumbing for periodic grids (1-D and 2-D, complex-to-complex).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::fields::Grid;
use crate::par::{self, Exec};

/// Forward/inverse transforms for an `n`-point-per-axis periodic grid.
#[derive(Clone)]
pub struct Spectral {
    pub dim: usize,
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    exec: Exec,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl Spectral {
    pub fn new(dim: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            dim,
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            exec: Exec::default(),
        }
    }

    pub fn for_grid(grid: &Grid) -> Self {
        Spectral::new(grid.dim, grid.n)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed integer wavenumber of index `i`; the Nyquist index maps to
    /// `n/2` (use [`Spectral::deriv_wavenumber`] for odd derivatives).
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.n as i64;
        let i = i as i64;
        (if i <= n / 2 { i } else { i - n }) as f64
    }

    /// Wavenumber used for first derivatives: zero at Nyquist so that real
    /// fields stay real.
    #[inline]
    pub fn deriv_wavenumber(&self, i: usize) -> f64 {
        if self.n.is_multiple_of(2) && i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    /// Wavevector of flat spectral index `idx` (axis 0 slowest).
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.wavenumber(idx), 0.0]
        } else {
            [self.wavenumber(idx / self.n), self.wavenumber(idx % self.n)]
        }
    }

    #[inline]
    pub fn deriv_wavevector(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.deriv_wavenumber(idx), 0.0]
        } else {
            [self.deriv_wavenumber(idx / self.n), self.deriv_wavenumber(idx % self.n)]
        }
    }

    fn rows(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        par::rows(self.exec, data, n, |_, row| {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(row, &mut scratch);
        });
    }

    fn transpose(&self, data: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        self.rows(data, plan);
        if self.dim == 2 {
            self.transpose(data);
            self.rows(data, plan);
            self.transpose(data);
        }
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd.clone());
    }

    /// Unnormalised inverse transform.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv.clone());
    }

    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = real.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Normalised inverse returning the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse_in_place(&mut spec);
        let scale = 1.0 / self.len() as f64;
        spec.into_iter().map(|z| z.re * scale).collect()
    }

    /// Spectral derivative along `axis` of a real sampled function.
    pub fn derivative(&self, spec: &[Complex64], axis: usize) -> Vec<f64> {
        let out: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(idx, &z)| {
                let k = self.deriv_wavevector(idx)[axis];
                z * Complex64::new(0.0, k)
            })
            .collect();
        self.inverse_real(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn derivative_of_single_mode_2d() {
        let n = 32;
        let s = Spectral::new(2, n);
        let h = TAU / n as f64;
        let f: Vec<f64> = (0..n * n)
            .map(|i| {
                let (a, b) = (i / n, i % n);
                (3.0 * a as f64 * h).sin() * (2.0 * b as f64 * h).cos()
            })
            .collect();
        let d1 = s.derivative(&s.forward(&f), 1);
        for i in 0..n * n {
            let (a, b) = (i / n, i % n);
            let exact = -2.0 * (3.0 * a as f64 * h).sin() * (2.0 * b as f64 * h).sin();
            assert!((d1[i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip() {
        let s = Spectral::new(1, 10);
        let f: Vec<f64> = (0..10).map(|i| (i * i) as f64 * 0.1).collect();
        let g = s.inverse_real(s.forward(&f));
        for (a, b) in f.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
