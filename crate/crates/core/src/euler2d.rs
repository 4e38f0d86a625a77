//! Pseudo-spectral 2-D incompressible Euler on `[0, 2π)²` in vorticity
//! form, and the discrete check of the mollified energy balance along its
//! trajectories.
//!
//! The solver evolves the Galerkin truncation of `ω_t = −u·∇ω` to the modes
//! with `|k_i| ≤ (n−1)/3`. Products of two retained fields then alias only
//! onto discarded modes, so the semi-discrete system conserves energy and
//! enstrophy exactly and any drift comes from the time integrator.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::commutator::flux_only;
use crate::error::{Error, Result};
use crate::fields::{gen_smooth_random, load_field, save_field, Grid, SampledField, SmoothSpec};
use crate::mollify::{mollify_with, ConvPath, ExtensionMode, MollifierKernel};
use crate::par::{self, Exec};
use crate::spectral::Spectral;

/// Vorticity on a periodic 2-D grid at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerState {
    pub omega: SampledField,
    pub time: f64,
}

impl EulerState {
    /// Checks that `omega` is a scalar on a periodic 2-D grid with zero mean
    /// (to `1e−12·max|ω|`), which the stream function solve requires.
    pub fn new(omega: SampledField, time: f64) -> Result<Self> {
        omega.require_periodic()?;
        if omega.grid.dim != 2 || omega.components != 1 {
            return Err(Error::Arity(format!(
                "vorticity must be a scalar on a 2-D grid, got {} component(s) in {}-D",
                omega.components, omega.grid.dim
            )));
        }
        let mean = omega.mean(0);
        let scale = omega.max_abs();
        if mean.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Precondition(format!(
                "vorticity must have zero mean, got {mean:e}"
            )));
        }
        Ok(EulerState { omega, time })
    }

    pub fn zero(n: usize) -> Result<Self> {
        EulerState::new(SampledField::zeros(Grid::periodic(2, n)?, 1), 0.0)
    }

    /// `ω = 2 cos x cos y`, a steady state (`ω = 2ψ`).
    pub fn taylor_green(n: usize) -> Result<Self> {
        let grid = Grid::periodic(2, n)?;
        let omega = SampledField::from_fn(grid, 1, |x, _| 2.0 * x[0].cos() * x[1].cos())?;
        EulerState::new(omega, 0.0)
    }

    /// Smooth random vorticity with spectrum `|k|^{−decay}` on the retained
    /// modes, scaled so that `max|u| = u_max` on the grid.
    pub fn smooth_random(n: usize, seed: u64, decay: f64, u_max: f64) -> Result<Self> {
        let grid = Grid::periodic(2, n)?;
        let spec = SmoothSpec {
            seed,
            decay_rate: decay,
            components: 1,
            kmax: Some(dealias_cutoff(n)),
        };
        let omega = gen_smooth_random(&spec, &grid)?;
        let state = EulerState::new(omega, 0.0)?;
        let umax = state.velocity(Exec::default())?.max_abs();
        if umax == 0.0 {
            return Ok(state);
        }
        EulerState::new(state.omega.scaled(u_max / umax), 0.0)
    }

    /// Vorticity `∂₀u₁ − ∂₁u₀` of a periodic 2-D velocity field.
    pub fn from_velocity(u: &SampledField) -> Result<Self> {
        u.require_vector()?;
        u.require_periodic()?;
        let sp = Spectral::for_grid(&u.grid);
        let d10 = sp.derivative(&sp.forward(u.component(1)), 0);
        let d01 = sp.derivative(&sp.forward(u.component(0)), 1);
        let values = d10.iter().zip(&d01).map(|(a, b)| a - b).collect();
        let mut omega = SampledField::new(u.grid.clone(), 1, values)?;
        let mean = omega.mean(0);
        omega.values.iter_mut().for_each(|v| *v -= mean);
        EulerState::new(omega, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.omega.grid
    }

    /// `u = ∇^⊥ψ = (∂₁ψ, −∂₀ψ)` with `−Δψ = ω`, flagged divergence-free.
    pub fn velocity(&self, exec: Exec) -> Result<SampledField> {
        let sp = Spectral::for_grid(self.grid()).with_exec(exec);
        let hat = sp.forward(&self.omega.values);
        let (u0, u1) = velocity_from_hat(&sp, &hat);
        let mut values = u0;
        values.extend(u1);
        let mut u = SampledField::new(self.grid().clone(), 2, values)?;
        u.divergence_free = true;
        Ok(u)
    }

    /// `‖u‖²` by grid quadrature.
    pub fn energy(&self) -> Result<f64> {
        Ok(self.velocity(Exec::default())?.l2_squared())
    }

    /// `‖ω‖²` by grid quadrature.
    pub fn enstrophy(&self) -> f64 {
        self.omega.l2_squared()
    }
}

/// Largest retained wavenumber per axis under the 2/3 rule.
pub fn dealias_cutoff(n: usize) -> usize {
    (n - 1) / 3
}

fn stream_hat(sp: &Spectral, hat: &[Complex64]) -> Vec<Complex64> {
    hat.iter()
        .enumerate()
        .map(|(i, &z)| {
            let k = sp.wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1];
            if k2 == 0.0 {
                Complex64::default()
            } else {
                z / k2
            }
        })
        .collect()
}

fn velocity_from_hat(sp: &Spectral, hat: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let psi = stream_hat(sp, hat);
    let u0 = sp.derivative(&psi, 1);
    let d0 = sp.derivative(&psi, 0);
    (u0, d0.into_iter().map(|v| -v).collect())
}

/// A step whose `dt` exceeded the advective limit `0.5·Δx/max|u|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CflWarning {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub limit: f64,
}

/// RK4 integrator for one grid size.
#[derive(Debug, Clone)]
pub struct Solver {
    sp: Spectral,
    grid: Grid,
    keep: Vec<bool>,
    inv_k2: Vec<f64>,
    exec: Exec,
}

impl Solver {
    pub fn new(grid: &Grid, exec: Exec) -> Result<Self> {
        if !grid.is_periodic() || grid.dim != 2 {
            return Err(Error::Unsupported("the Euler solver runs on periodic 2-D grids".into()));
        }
        if grid.n < 8 {
            return Err(Error::Resolution(format!(
                "the solver needs at least 8 points per axis, got {}",
                grid.n
            )));
        }
        let sp = Spectral::for_grid(grid).with_exec(exec);
        let cut = dealias_cutoff(grid.n) as f64;
        let keep = (0..grid.len())
            .map(|i| {
                let k = sp.wavevector(i);
                k[0].abs() <= cut && k[1].abs() <= cut
            })
            .collect();
        let inv_k2 = (0..grid.len())
            .map(|i| {
                let k = sp.wavevector(i);
                let k2 = k[0] * k[0] + k[1] * k[1];
                if k2 == 0.0 {
                    0.0
                } else {
                    1.0 / k2
                }
            })
            .collect();
        Ok(Solver {
            sp,
            grid: grid.clone(),
            keep,
            inv_k2,
            exec,
        })
    }

    fn check(&self, state: &EulerState) -> Result<()> {
        if state.grid() != &self.grid {
            return Err(Error::Config("state and solver grids differ".into()));
        }
        Ok(())
    }

    /// Forward transform restricted to the retained modes.
    fn project(&self, omega: &[f64]) -> Vec<Complex64> {
        let mut hat = self.sp.forward(omega);
        for (z, &k) in hat.iter_mut().zip(&self.keep) {
            if !k {
                *z = Complex64::default();
            }
        }
        hat
    }

    /// Returns `−P(u·∇ω)` in spectral space and `max|u|` on the grid.
    fn rhs(&self, w: &[Complex64]) -> (Vec<Complex64>, f64) {
        let sp = &self.sp;
        let psi: Vec<Complex64> = w.iter().zip(&self.inv_k2).map(|(z, s)| z * s).collect();
        let u0 = sp.derivative(&psi, 1);
        let u1: Vec<f64> = sp.derivative(&psi, 0).into_iter().map(|v| -v).collect();
        let w0 = sp.derivative(w, 0);
        let w1 = sp.derivative(w, 1);
        let mut adv = vec![0.0; u0.len()];
        par::fill(self.exec, &mut adv, |p, a| *a = u0[p] * w0[p] + u1[p] * w1[p]);
        let umax = u0.iter().zip(&u1).fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
        let mut hat = sp.forward(&adv);
        for (z, &k) in hat.iter_mut().zip(&self.keep) {
            *z = if k { -*z } else { Complex64::default() };
        }
        (hat, umax)
    }

    fn rk4(&self, w: &mut [Complex64], dt: f64) -> f64 {
        let stage = |base: &[Complex64], k: &[Complex64], a: f64| -> Vec<Complex64> {
            base.iter().zip(k).map(|(b, k)| b + k * a).collect()
        };
        let (k1, umax) = self.rhs(w);
        let (k2, _) = self.rhs(&stage(w, &k1, 0.5 * dt));
        let (k3, _) = self.rhs(&stage(w, &k2, 0.5 * dt));
        let (k4, _) = self.rhs(&stage(w, &k3, dt));
        for i in 0..w.len() {
            w[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0);
        }
        umax
    }

    fn limit(&self, umax: f64) -> f64 {
        if umax > 0.0 {
            0.5 * self.grid.spacing() / umax
        } else {
            f64::INFINITY
        }
    }

    fn to_state(&self, w: &[Complex64], time: f64) -> Result<EulerState> {
        let mut values = self.sp.inverse_real(w.to_vec());
        // the k = 0 mode is zero; remove the rounding-level mean as well
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        EulerState::new(SampledField::new(self.grid.clone(), 1, values)?, time)
    }

    /// One RK4 step of the truncated system. A step above the advective
    /// limit still runs and is reported through the returned warning.
    pub fn step(&self, state: &EulerState, dt: f64) -> Result<(EulerState, Option<CflWarning>)> {
        self.check(state)?;
        check_dt(dt)?;
        let mut w = self.project(&state.omega.values);
        let umax = self.rk4(&mut w, dt);
        let warning = cfl(0, state.time, dt, self.limit(umax));
        Ok((self.to_state(&w, state.time + dt)?, warning))
    }

    /// Integrates `n_steps` steps, keeping every `snapshot_every`-th state
    /// plus the initial (projected onto the retained modes) and final ones.
    pub fn run(&self, initial: &EulerState, dt: f64, n_steps: usize, snapshot_every: usize) -> Result<Trajectory> {
        self.check(initial)?;
        check_dt(dt)?;
        if snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        let mut w = self.project(&initial.omega.values);
        let mut states = vec![self.to_state(&w, initial.time)?];
        let mut warnings = Vec::new();
        let t0 = initial.time;
        for step in 1..=n_steps {
            let umax = self.rk4(&mut w, dt);
            let time = t0 + step as f64 * dt;
            if let Some(warn) = cfl(step, time - dt, dt, self.limit(umax)) {
                log::warn!("step {step}: dt = {dt} exceeds the advective limit {}", warn.limit);
                warnings.push(warn);
            }
            if step % snapshot_every == 0 || step == n_steps {
                states.push(self.to_state(&w, time)?);
            }
        }
        Ok(Trajectory {
            dt,
            n_steps,
            snapshot_every,
            states,
            warnings,
        })
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

fn cfl(step: usize, time: f64, dt: f64, limit: f64) -> Option<CflWarning> {
    (dt > limit).then_some(CflWarning { step, time, dt, limit })
}

/// Snapshots of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_every: usize,
    pub states: Vec<EulerState>,
    pub warnings: Vec<CflWarning>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }
}

/// Both sides of the mollified energy balance over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentity {
    pub eps: f64,
    /// `‖u^ε(t_end)‖² − ‖u^ε(t_0)‖²`.
    pub lhs_gap: f64,
    /// Trapezoid rule of `∫(u⊗u)^ε : ∇u^ε` over the snapshots.
    pub time_integral: f64,
    /// `|lhs_gap − 2·time_integral|`.
    pub residual: f64,
    /// `‖u(t_end)‖² − ‖u(t_0)‖²`.
    pub energy_gap: f64,
    pub energy0: f64,
    pub snapshots: usize,
}

/// Checks `‖u^ε(t₂)‖² − ‖u^ε(t₁)‖² = 2∫∫(u⊗u)^ε : ∇u^ε` between the first
/// and last snapshot. Snapshots must be evenly spaced in time.
pub fn verify_energy_identity(traj: &Trajectory, k: &MollifierKernel, exec: Exec) -> Result<EnergyIdentity> {
    let states = &traj.states;
    if states.len() < 2 {
        return Err(Error::Config(format!(
            "the energy identity needs at least 2 snapshots, got {}",
            states.len()
        )));
    }
    let times = traj.times();
    let h = times[1] - times[0];
    if let Some(w) = times.windows(2).find(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs()) {
        return Err(Error::Config(format!(
            "snapshots are not evenly spaced: gap {} differs from {h}",
            w[1] - w[0]
        )));
    }
    let fluxes: Vec<f64> = states
        .iter()
        .map(|s| flux_only(exec, &s.velocity(exec)?, k))
        .collect::<Result<_>>()?;
    let inner: f64 = fluxes[1..fluxes.len() - 1].iter().sum();
    let time_integral = h * (0.5 * (fluxes[0] + fluxes[fluxes.len() - 1]) + inner);
    let mollified_energy = |s: &EulerState| -> Result<f64> {
        let u = s.velocity(exec)?;
        Ok(mollify_with(exec, ConvPath::Auto, &u, k, ExtensionMode::Periodic)?.l2_squared())
    };
    let (first, last) = (&states[0], &states[states.len() - 1]);
    let lhs_gap = mollified_energy(last)? - mollified_energy(first)?;
    let energy0 = first.energy()?;
    Ok(EnergyIdentity {
        eps: k.eps,
        lhs_gap,
        time_integral,
        residual: (lhs_gap - 2.0 * time_integral).abs(),
        energy_gap: last.energy()? - energy0,
        energy0,
        snapshots: states.len(),
    })
}

/// JSON manifest written next to saved snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_every: usize,
    pub grid: Grid,
    pub seed: Option<u64>,
    pub times: Vec<f64>,
    pub files: Vec<String>,
    pub warnings: Vec<CflWarning>,
}

pub const MANIFEST_NAME: &str = "trajectory.json";

/// Writes one field file per snapshot plus `trajectory.json` into `dir`.
pub fn save_trajectory(dir: &Path, traj: &Trajectory, seed: Option<u64>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(traj.states.len());
    for (i, s) in traj.states.iter().enumerate() {
        let name = format!("omega_{i:06}.field");
        save_field(&dir.join(&name), &s.omega, None)?;
        files.push(name);
    }
    let grid = traj
        .states
        .first()
        .map(|s| s.grid().clone())
        .ok_or_else(|| Error::Config("cannot save an empty trajectory".into()))?;
    let manifest = TrajectoryManifest {
        dt: traj.dt,
        n_steps: traj.n_steps,
        snapshot_every: traj.snapshot_every,
        grid,
        seed,
        times: traj.times(),
        files,
        warnings: traj.warnings.clone(),
    };
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_trajectory(dir: &Path) -> Result<(Trajectory, TrajectoryManifest)> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: TrajectoryManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.files.len() != manifest.times.len() {
        return Err(Error::Format(
            "manifest lists a different number of files and times".into(),
        ));
    }
    let missing: Vec<PathBuf> = manifest
        .files
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let states = manifest
        .files
        .iter()
        .zip(&manifest.times)
        .map(|(f, &t)| EulerState::new(load_field(&dir.join(f))?, t))
        .collect::<Result<_>>()?;
    let traj = Trajectory {
        dt: manifest.dt,
        n_steps: manifest.n_steps,
        snapshot_every: manifest.snapshot_every,
        states,
        warnings: manifest.warnings.clone(),
    };
    Ok((traj, manifest))
}
