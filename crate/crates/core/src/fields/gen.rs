use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Grid, SampledField};
use crate::error::{Error, Result};
use crate::spectral::Spectral;

/// Name and version of the phase generator. Changing how phases are drawn
/// must bump this string.
pub const PHASE_GENERATOR: &str = "chacha8-seed_from_u64/v1";

/// Relative phase locking the three waves of one 2-D lacunary level.
/// With `χ = θ + φ + TRIAD_LOCK` every level contributes to the energy flux
/// with the same sign; `3π/2` maximises the (positive) flux.
const TRIAD_LOCK: f64 = 3.0 * std::f64::consts::FRAC_PI_2;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lacunary (Weierstrass-type) field with amplitudes
/// `a_k = b^{-αk} (k ln b)^{-λ}` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LacunarySpec {
    pub alpha: f64,
    pub lambda: f64,
    pub base: u32,
    pub levels: u32,
    pub seed: u64,
    /// Forces every phase to zero (useful for closed-form checks).
    #[serde(default)]
    pub zero_phase: bool,
}

/// One plane wave of a 2-D lacunary stream function:
/// `amplitude · sin(k·x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamWave {
    pub wavevector: [f64; 2],
    pub amplitude: f64,
    pub phase: f64,
}

impl LacunarySpec {
    pub fn amplitude(&self, k: u32) -> f64 {
        let b = self.base as f64;
        let k = k as f64;
        b.powf(-self.alpha * k) * (k * b.ln()).powf(-self.lambda)
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        (1..=self.levels).map(|k| self.amplitude(k)).collect()
    }

    /// Highest wavenumber `b^K`.
    pub fn top_mode(&self) -> f64 {
        (self.base as f64).powi(self.levels as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.base < 2 {
            bad.push(format!("base b must be >= 2, got {}", self.base));
        }
        if self.levels < 1 {
            bad.push(format!("levels K must be >= 1, got {}", self.levels));
        }
        if !self.alpha.is_finite() || !self.lambda.is_finite() {
            bad.push("alpha and lambda must be finite".into());
        }
        if bad.is_empty() {
            let a = self.amplitudes();
            if a.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                bad.push("amplitudes must be positive and finite".into());
            }
            if self.alpha > 0.0 && a.windows(2).any(|w| w[1] >= w[0]) {
                bad.push(format!(
                    "amplitudes must decrease in k for alpha > 0 (alpha={}, lambda={})",
                    self.alpha, self.lambda
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn check_resolution(&self, n: usize) -> Result<()> {
        if self.top_mode() > n as f64 / 4.0 {
            return Err(Error::Resolution(format!(
                "top mode b^K = {} exceeds n/4 = {} (need at least 4 points per wavelength)",
                self.top_mode(),
                n as f64 / 4.0
            )));
        }
        Ok(())
    }

    /// Phases `θ_k` of the 1-D series, drawn in level order.
    pub fn phases_1d(&self) -> Vec<f64> {
        let mut rng = rng_for(self.seed);
        (0..self.levels)
            .map(|_| {
                let t = rng.gen::<f64>() * TAU;
                if self.zero_phase {
                    0.0
                } else {
                    t
                }
            })
            .collect()
    }

    /// Waves of the 2-D stream function. Level `k` is the triad
    /// `p = (b^k, 0)`, `q = (0, ⌈b^k/2⌉)`, `p + q`, each scaled so its
    /// velocity amplitude is `a_k`. The legs have distinct lengths; with
    /// equal lengths a radial filter sees no net transfer and the flux
    /// vanishes identically.
    pub fn stream_waves(&self) -> Vec<StreamWave> {
        let mut rng = rng_for(self.seed);
        let b = self.base as f64;
        let mut waves = Vec::with_capacity(3 * self.levels as usize);
        for k in 1..=self.levels {
            let mut theta = rng.gen::<f64>() * TAU;
            let mut phi = rng.gen::<f64>() * TAU;
            if self.zero_phase {
                theta = 0.0;
                phi = 0.0;
            }
            let bk = b.powi(k as i32);
            let h = (bk / 2.0).ceil();
            let a = self.amplitude(k);
            waves.push(StreamWave {
                wavevector: [bk, 0.0],
                amplitude: a / bk,
                phase: theta,
            });
            waves.push(StreamWave {
                wavevector: [0.0, h],
                amplitude: a / h,
                phase: phi,
            });
            waves.push(StreamWave {
                wavevector: [bk, h],
                amplitude: a / bk.hypot(h),
                phase: (theta + phi + TRIAD_LOCK).rem_euclid(TAU),
            });
        }
        waves
    }
}

/// Generates the lacunary test field on a periodic grid.
///
/// 1-D: `f(x) = Σ a_k sin(b^k x + θ_k)`. 2-D: the stream function built from
/// [`LacunarySpec::stream_waves`], differentiated spectrally into
/// `u = (∂₂ψ, −∂₁ψ)` and flagged divergence-free.
pub fn gen_lacunary(spec: &LacunarySpec, grid: &Grid) -> Result<SampledField> {
    spec.validate()?;
    if !grid.is_periodic() {
        return Err(Error::Unsupported(
            "lacunary fields are generated on periodic grids".into(),
        ));
    }
    spec.check_resolution(grid.n)?;
    let b = spec.base as f64;
    match grid.dim {
        1 => {
            let amps = spec.amplitudes();
            let phases = spec.phases_1d();
            SampledField::from_fn(grid.clone(), 1, |x, _| {
                amps.iter()
                    .zip(&phases)
                    .enumerate()
                    .map(|(i, (a, t))| a * (b.powi(i as i32 + 1) * x[0] + t).sin())
                    .sum()
            })
        }
        _ => {
            let waves = spec.stream_waves();
            let psi: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let x = grid.point(i);
                    waves
                        .iter()
                        .map(|w| w.amplitude * (w.wavevector[0] * x[0] + w.wavevector[1] * x[1] + w.phase).sin())
                        .sum()
                })
                .collect();
            let sp = Spectral::for_grid(grid);
            let hat = sp.forward(&psi);
            let d0 = sp.derivative(&hat, 0);
            let d1 = sp.derivative(&hat, 1);
            let mut values = d1;
            values.extend(d0.into_iter().map(|v| -v));
            let mut f = SampledField::new(grid.clone(), 2, values)?;
            f.divergence_free = true;
            Ok(f)
        }
    }
}

/// Random-phase spectrum with amplitude `|k|^{-decay_rate}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub seed: u64,
    pub decay_rate: f64,
    #[serde(default = "one")]
    pub components: usize,
    /// Optional cap on `max |k_i|`; defaults to everything below Nyquist.
    #[serde(default)]
    pub kmax: Option<usize>,
}

fn one() -> usize {
    1
}

/// An explicit trigonometric polynomial
/// `Σ amp · cos(k·x + phase)` per component; evaluable anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSpectrum {
    pub dim: usize,
    pub components: usize,
    /// `(component, wavevector, amplitude, phase)`.
    pub modes: Vec<(usize, [i64; 2], f64, f64)>,
}

/// Phase of one mode; a pure function of (seed, component, wavevector) so
/// grids of different sizes agree on their shared modes.
fn mode_phase(seed: u64, comp: usize, k: [i64; 2]) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [comp as i64, k[0], k[1]] {
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9) ^ (v as u64).wrapping_add(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    rng_for(h).gen::<f64>() * TAU
}

impl SmoothSpectrum {
    pub fn build(spec: &SmoothSpec, dim: usize, kmax: usize) -> Result<Self> {
        let floor = dim as f64 / 2.0 + 1.0;
        if !(spec.decay_rate > floor) {
            return Err(Error::Precondition(format!(
                "decay_rate must exceed dim/2 + 1 = {floor}, got {}",
                spec.decay_rate
            )));
        }
        if spec.components != 1 && spec.components != dim {
            return Err(Error::Arity(format!(
                "smooth field with {} components on a {dim}-D grid",
                spec.components
            )));
        }
        let kmax = spec.kmax.map_or(kmax, |c| c.min(kmax)) as i64;
        let mut modes = Vec::new();
        for c in 0..spec.components {
            let k1range = if dim == 2 { -kmax..=kmax } else { 0..=0 };
            for k0 in 0..=kmax {
                for k1 in k1range.clone() {
                    if k0 == 0 && k1 <= 0 {
                        continue;
                    }
                    let k = [k0, k1];
                    let mag = ((k0 * k0 + k1 * k1) as f64).sqrt();
                    modes.push((c, k, mag.powf(-spec.decay_rate), mode_phase(spec.seed, c, k)));
                }
            }
        }
        Ok(SmoothSpectrum {
            dim,
            components: spec.components,
            modes,
        })
    }

    pub fn eval(&self, x: [f64; 2], comp: usize) -> f64 {
        self.modes
            .iter()
            .filter(|m| m.0 == comp)
            .map(|&(_, k, a, p)| a * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + p).cos())
            .sum()
    }

    /// `Σ |amp|` for one component: a hard bound on its sup norm.
    pub fn abs_sum(&self, comp: usize) -> f64 {
        self.modes.iter().filter(|m| m.0 == comp).map(|m| m.2.abs()).sum()
    }

    pub fn scale(&mut self, a: f64) {
        self.modes.iter_mut().for_each(|m| m.2 *= a);
    }

    /// Samples onto a periodic grid through one inverse FFT per component.
    pub fn sample(&self, grid: &Grid) -> Result<SampledField> {
        if !grid.is_periodic() || grid.dim != self.dim {
            return Err(Error::Config(
                "spectrum sampling needs a periodic grid of matching dimension".into(),
            ));
        }
        let n = grid.n as i64;
        let total = grid.len() as f64;
        let sp = Spectral::for_grid(grid);
        let mut values = Vec::with_capacity(grid.len() * self.components);
        for c in 0..self.components {
            let mut hat = vec![Complex64::default(); grid.len()];
            for &(_, k, a, p) in self.modes.iter().filter(|m| m.0 == c) {
                if k[0].abs() * 2 >= n || k[1].abs() * 2 >= n {
                    continue;
                }
                let z = Complex64::from_polar(a * total / 2.0, p);
                let idx = |k: [i64; 2]| grid.flatten([k[0].rem_euclid(n) as usize, k[1].rem_euclid(n) as usize]);
                hat[idx(k)] += z;
                hat[idx([-k[0], -k[1]])] += z.conj();
            }
            values.extend(sp.inverse_real(hat));
        }
        SampledField::new(grid.clone(), self.components, values)
    }
}

/// Smooth random mean-zero field on a periodic grid.
pub fn gen_smooth_random(spec: &SmoothSpec, grid: &Grid) -> Result<SampledField> {
    if !grid.is_periodic() {
        return Err(Error::Unsupported(
            "smooth random fields are generated on periodic grids".into(),
        ));
    }
    let kmax = (grid.n - 1) / 2;
    SmoothSpectrum::build(spec, grid.dim, kmax)?.sample(grid)
}

/// Bounded pressure stand-in: a smooth random scalar rescaled so that its
/// sup norm is at most `p_inf` everywhere (not only on grid nodes).
pub fn pressure_standin(seed: u64, decay_rate: f64, kmax: usize, p_inf: f64) -> Result<SmoothSpectrum> {
    let spec = SmoothSpec {
        seed,
        decay_rate,
        components: 1,
        kmax: Some(kmax),
    };
    let mut s = SmoothSpectrum::build(&spec, 2, kmax)?;
    let total = s.abs_sum(0);
    if total > 0.0 {
        s.scale(p_inf / total);
    }
    Ok(s)
}
