//! TOML sweep configuration and its up-front validation.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boundary::{coupling_eps, H0};
use crate::error::{Error, Result};
use crate::fields::LacunarySpec;
use crate::modulus::{Modulus, ModulusSpec};
use crate::mollify::MIN_CELLS_PER_EPS;

use super::fit::{FitModel, MIN_OCTAVES, MIN_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    FluxSweep,
    LemmaSweep,
    JSweep,
    EulerIdentity,
    SeminormReport,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::FluxSweep => "flux_sweep",
            Experiment::LemmaSweep => "lemma_sweep",
            Experiment::JSweep => "j_sweep",
            Experiment::EulerIdentity => "euler_identity",
            Experiment::SeminormReport => "seminorm_report",
        }
    }
}

/// Test field. Periodic kinds (`lacunary`, `smooth`) feed the flux sweep and
/// the seminorm report; disk kinds feed the lemma and J sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Lacunary {
        alpha: f64,
        lambda: f64,
        #[serde(default = "two")]
        base: u32,
        levels: u32,
        #[serde(default)]
        zero_phase: bool,
    },
    Smooth {
        decay_rate: f64,
        #[serde(default)]
        kmax: Option<usize>,
    },
    LacunaryDisk {
        alpha: f64,
        lambda: f64,
        #[serde(default = "two")]
        base: u32,
        levels: u32,
        #[serde(default = "pi")]
        scale: f64,
    },
    NearExtremal,
    Linear,
    Rotation,
    Zero,
}

fn two() -> u32 {
    2
}

fn pi() -> f64 {
    PI
}

impl FieldConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            FieldConfig::Lacunary { .. } => "lacunary",
            FieldConfig::Smooth { .. } => "smooth",
            FieldConfig::LacunaryDisk { .. } => "lacunary_disk",
            FieldConfig::NearExtremal => "near_extremal",
            FieldConfig::Linear => "linear",
            FieldConfig::Rotation => "rotation",
            FieldConfig::Zero => "zero",
        }
    }

    /// The lacunary generator behind `lacunary` and `lacunary_disk` fields.
    pub fn lacunary_spec(&self, seed: u64) -> Option<LacunarySpec> {
        match *self {
            FieldConfig::Lacunary {
                alpha,
                lambda,
                base,
                levels,
                zero_phase,
            } => Some(LacunarySpec {
                alpha,
                lambda,
                base,
                levels,
                seed,
                zero_phase,
            }),
            FieldConfig::LacunaryDisk {
                alpha,
                lambda,
                base,
                levels,
                ..
            } => Some(LacunarySpec {
                alpha,
                lambda,
                base,
                levels,
                seed,
                zero_phase: false,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    /// Grid sizes for the seminorm report (defaults to `[n]`).
    pub sizes: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 256, sizes: vec![] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dyadic {
    pub start: f64,
    pub count: usize,
}

/// Scale lists. Each of `eps` and `h` is given either explicitly or as a
/// dyadic sequence, not both.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepList {
    pub eps: Vec<f64>,
    pub eps_dyadic: Option<Dyadic>,
    pub h: Vec<f64>,
    pub h_dyadic: Option<Dyadic>,
}

impl SweepList {
    pub fn eps_list(&self) -> Vec<f64> {
        resolve(&self.eps, self.eps_dyadic)
    }

    pub fn h_list(&self) -> Vec<f64> {
        resolve(&self.h, self.h_dyadic)
    }
}

fn resolve(list: &[f64], dy: Option<Dyadic>) -> Vec<f64> {
    match dy {
        Some(d) if list.is_empty() => super::fit::dyadic(d.start, d.count),
        _ => list.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    pub nodes_across: usize,
    pub n_theta: usize,
    pub sample_n: usize,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            nodes_across: 128,
            n_theta: 1024,
            sample_n: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JConfig {
    pub cells_per_eps: f64,
    pub half_width: f64,
    pub sample_n: usize,
    pub block_rows: usize,
}

impl Default for JConfig {
    fn default() -> Self {
        JConfig {
            cells_per_eps: 8.0,
            half_width: 1.5,
            sample_n: 1024,
            block_rows: 128,
        }
    }
}

/// Smooth bounded pressure stand-in for the J sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureConfig {
    pub decay_rate: f64,
    pub kmax: usize,
    pub p_inf: f64,
}

impl Default for PressureConfig {
    fn default() -> Self {
        PressureConfig {
            decay_rate: 3.0,
            kmax: 4,
            p_inf: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerConfig {
    pub n: usize,
    /// Spectral decay of the initial vorticity.
    pub decay_rate: f64,
    /// Initial `max|u|`.
    pub u_max: f64,
    pub t_final: f64,
    pub dt: Vec<f64>,
    pub snapshot_every: usize,
    /// Resolution floor (in cells) of the kernel; the identity holds for
    /// any stencil, so this may sit below the bound floor of 4.
    pub kernel_floor: f64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        EulerConfig {
            n: 128,
            decay_rate: 3.0,
            u_max: 10.0,
            t_final: 0.5,
            dt: vec![1e-3, 5e-4],
            snapshot_every: 1,
            kernel_floor: 1.0,
        }
    }
}

/// Thresholds for the invariants audited on every CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    /// Relative slack on every measured-below-bound inequality.
    pub bound_slack: f64,
    pub residual_identity_max: f64,
    pub null_flux_rel_max: f64,
    /// Model for exponent fits; by default `power` when `λ = 0` and
    /// `power_log` otherwise.
    pub fit_model: Option<FitModel>,
    /// Floor on the fitted decay exponent of `|Π_ε|`.
    pub min_decay_exponent: Option<f64>,
    /// Cap on `max_ε g(ε) / g(ε_max)` with `g = |Π_ε| / (ε^{3α−1} (log 1/ε)^{−3λ})`.
    pub max_normalised_growth: Option<f64>,
    pub sup_exponent: Option<f64>,
    pub integral_exponent: Option<f64>,
    pub exponent_tol: f64,
    /// Require the lemma values to vanish (up to `zero_tol`).
    pub expect_zero: bool,
    pub zero_tol: f64,
    pub envelope_monotone: bool,
    /// Slack on the decay of `|J₂| + |J₃|` along the sweep.
    pub measured_decay_slack: Option<f64>,
    pub euler_residual_max: f64,
    pub euler_min_shrink: f64,
    pub energy_drift_max: f64,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            bound_slack: 1e-12,
            residual_identity_max: 1e-10,
            null_flux_rel_max: 1e-8,
            fit_model: None,
            min_decay_exponent: None,
            max_normalised_growth: None,
            sup_exponent: None,
            integral_exponent: None,
            exponent_tol: 0.1,
            expect_zero: false,
            zero_tol: 1e-12,
            envelope_monotone: true,
            measured_decay_slack: Some(0.1),
            euler_residual_max: 1e-4,
            euler_min_shrink: 4.0,
            energy_drift_max: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// File stem of the CSV and summary (defaults to the experiment name).
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "zero_field")]
    pub field: FieldConfig,
    #[serde(default)]
    pub modulus: Option<ModulusSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub sweep: SweepList,
    #[serde(default)]
    pub lemma: LemmaConfig,
    #[serde(default)]
    pub jsweep: JConfig,
    #[serde(default)]
    pub pressure: PressureConfig,
    #[serde(default)]
    pub euler: EulerConfig,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub output: OutputConfig,
}

fn zero_field() -> FieldConfig {
    FieldConfig::Zero
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SweepConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn stem(&self) -> String {
        self.output
            .name
            .clone()
            .unwrap_or_else(|| self.experiment.name().to_string())
    }

    pub fn modulus(&self) -> Result<Modulus> {
        self.modulus
            .as_ref()
            .ok_or_else(|| {
                Error::Config(format!(
                    "experiment {} needs a [modulus] section",
                    self.experiment.name()
                ))
            })?
            .build()
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        if self.grid.sizes.is_empty() {
            vec![self.grid.n]
        } else {
            self.grid.sizes.clone()
        }
    }

    /// Checks every precondition of the configured experiment and reports
    /// all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let modulus = match self.experiment {
            Experiment::EulerIdentity => None,
            _ => match self.modulus() {
                Ok(m) => Some(m),
                Err(e) => {
                    bad.push(e.to_string());
                    None
                }
            },
        };
        if let Some(spec) = self.field.lacunary_spec(self.seed) {
            if let Err(e) = spec.validate() {
                bad.push(e.to_string());
            }
        }
        if let FieldConfig::Smooth { decay_rate, .. } = self.field {
            if !(decay_rate > 2.0) {
                bad.push(format!("smooth field decay_rate must exceed 2, got {decay_rate}"));
            }
        }
        let lists = [
            ("eps_dyadic", self.sweep.eps_dyadic, &self.sweep.eps),
            ("h_dyadic", self.sweep.h_dyadic, &self.sweep.h),
        ];
        for (name, dy, list) in lists {
            if let Some(dy) = dy {
                if !list.is_empty() {
                    bad.push(format!("give either an explicit list or {name}, not both"));
                }
                if !(dy.start > 0.0) || dy.count == 0 {
                    bad.push(format!("{name} needs start > 0 and count >= 1"));
                }
            }
        }
        match self.experiment {
            Experiment::FluxSweep => self.validate_flux(modulus.as_ref(), &mut bad),
            Experiment::LemmaSweep => self.validate_lemma(modulus.as_ref(), &mut bad),
            Experiment::JSweep => self.validate_j(modulus.as_ref(), &mut bad),
            Experiment::EulerIdentity => self.validate_euler(&mut bad),
            Experiment::SeminormReport => self.validate_seminorm(&mut bad),
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    fn periodic_field(&self, n: usize, bad: &mut Vec<String>) {
        match &self.field {
            FieldConfig::Lacunary { .. } => {
                let spec = self.field.lacunary_spec(self.seed).expect("lacunary");
                if let Err(e) = spec.check_resolution(n) {
                    bad.push(e.to_string());
                }
            }
            FieldConfig::Smooth { .. } => {}
            other => bad.push(format!(
                "experiment {} needs a periodic field (lacunary or smooth), got {}",
                self.experiment.name(),
                other.kind()
            )),
        }
        if n < 8 {
            bad.push(format!("grid.n must be at least 8, got {n}"));
        }
    }

    fn fit_span(&self, name: &str, list: &[f64], bad: &mut Vec<String>) {
        let pos: Vec<f64> = list.iter().copied().filter(|v| *v > 0.0).collect();
        if pos.is_empty() {
            return;
        }
        let octaves =
            (pos.iter().cloned().fold(0.0, f64::max) / pos.iter().cloned().fold(f64::INFINITY, f64::min)).log2();
        if list.len() < MIN_POINTS || octaves < MIN_OCTAVES - 1e-9 {
            bad.push(format!(
                "exponent checks on {name} need at least {MIN_POINTS} points over {MIN_OCTAVES} octaves, got {} over {octaves:.2}",
                list.len()
            ));
        }
    }

    fn validate_flux(&self, m: Option<&Modulus>, bad: &mut Vec<String>) {
        let n = self.grid.n;
        self.periodic_field(n, bad);
        let eps = self.sweep.eps_list();
        if eps.is_empty() {
            bad.push("flux_sweep needs a non-empty eps list".into());
        }
        let dx = TAU / n.max(1) as f64;
        for &e in &eps {
            if !(e < 1.0) {
                bad.push(format!("eps = {e} must be < 1"));
            }
            if !(e >= MIN_CELLS_PER_EPS * dx) {
                bad.push(format!(
                    "eps = {e} is below 4·dx = {} at n = {n}",
                    MIN_CELLS_PER_EPS * dx
                ));
            }
            if let Some(m) = m {
                if e > m.s_max {
                    bad.push(format!("eps = {e} exceeds the modulus s_max = {}", m.s_max));
                }
            }
        }
        if self.checks.min_decay_exponent.is_some() || self.checks.max_normalised_growth.is_some() {
            self.fit_span("eps", &eps, bad);
        }
    }

    fn validate_h(&self, hs: &[f64], bad: &mut Vec<String>) {
        if hs.is_empty() {
            bad.push(format!("{} needs a non-empty h list", self.experiment.name()));
        }
        for &h in hs {
            if !(h > 0.0 && h < H0.min(1.0)) {
                bad.push(format!("h = {h} must lie in (0, {H0})"));
            }
        }
    }

    fn validate_lemma(&self, _m: Option<&Modulus>, bad: &mut Vec<String>) {
        let hs = self.sweep.h_list();
        self.validate_h(&hs, bad);
        match self.field {
            FieldConfig::Lacunary { .. } | FieldConfig::Smooth { .. } => {
                bad.push(format!("lemma_sweep needs a disk field, got {}", self.field.kind()))
            }
            _ => {}
        }
        if self.lemma.nodes_across < 64 {
            bad.push(format!(
                "lemma.nodes_across must be at least 64, got {}",
                self.lemma.nodes_across
            ));
        }
        if self.lemma.n_theta < 16 || self.lemma.sample_n < 16 {
            bad.push("lemma.n_theta and lemma.sample_n must be at least 16".into());
        }
        if self.checks.sup_exponent.is_some() || self.checks.integral_exponent.is_some() {
            self.fit_span("h", &hs, bad);
        }
    }

    fn validate_j(&self, m: Option<&Modulus>, bad: &mut Vec<String>) {
        let hs = self.sweep.h_list();
        self.validate_h(&hs, bad);
        match self.field {
            FieldConfig::LacunaryDisk { .. } | FieldConfig::Rotation | FieldConfig::Zero => {}
            _ => bad.push(format!(
                "j_sweep needs a divergence-free disk field (lacunary_disk, rotation or zero), got {}",
                self.field.kind()
            )),
        }
        let j = &self.jsweep;
        if !(j.cells_per_eps >= 8.0) {
            bad.push(format!(
                "jsweep.cells_per_eps must be at least 8, got {}",
                j.cells_per_eps
            ));
        }
        if let Some(m) = m {
            for &h in &hs {
                let eps = coupling_eps(h, m.alpha());
                if !(eps < h / 4.0) {
                    bad.push(format!(
                        "coupling eps = {eps:.6} is not below h/4 = {} at h = {h}",
                        h / 4.0
                    ));
                } else if j.half_width < 1.0 + 4.0 * eps {
                    bad.push(format!(
                        "jsweep.half_width {} leaves no halo for eps = {eps}",
                        j.half_width
                    ));
                }
            }
        }
        if !(self.pressure.decay_rate > 2.0) || !(self.pressure.p_inf >= 0.0) || self.pressure.kmax == 0 {
            bad.push("pressure needs decay_rate > 2, p_inf >= 0 and kmax >= 1".into());
        }
    }

    fn validate_euler(&self, bad: &mut Vec<String>) {
        let e = &self.euler;
        if e.n < 8 {
            bad.push(format!("euler.n must be at least 8, got {}", e.n));
        }
        if !(e.decay_rate > 2.0) {
            bad.push(format!("euler.decay_rate must exceed 2, got {}", e.decay_rate));
        }
        if !(e.u_max > 0.0) || !(e.t_final > 0.0) {
            bad.push("euler.u_max and euler.t_final must be positive".into());
        }
        if e.dt.is_empty() {
            bad.push("euler.dt must list at least one time step".into());
        }
        for &dt in &e.dt {
            let steps = e.t_final / dt;
            if !(dt > 0.0) {
                bad.push(format!("time step {dt} must be positive"));
            } else if (steps - steps.round()).abs() > 1e-9 * steps {
                bad.push(format!(
                    "t_final = {} is not a whole number of steps of {dt}",
                    e.t_final
                ));
            }
        }
        if e.snapshot_every == 0 {
            bad.push("euler.snapshot_every must be at least 1".into());
        }
        let eps = self.sweep.eps_list();
        if eps.is_empty() {
            bad.push("euler_identity needs a non-empty eps list".into());
        }
        let dx = TAU / e.n.max(1) as f64;
        for &x in &eps {
            if !(x < 1.0) || !(x >= e.kernel_floor * dx) {
                bad.push(format!(
                    "eps = {x} must lie in [{}·dx, 1) = [{}, 1)",
                    e.kernel_floor,
                    e.kernel_floor * dx
                ));
            }
        }
    }

    fn validate_seminorm(&self, bad: &mut Vec<String>) {
        let sizes = self.grid_sizes();
        for n in sizes {
            self.periodic_field(n, bad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flux_cfg() -> SweepConfig {
        SweepConfig::from_toml(
            r#"
            experiment = "flux_sweep"
            seed = 3
            [field]
            kind = "lacunary"
            alpha = 0.4
            lambda = 0.0
            levels = 5
            [modulus]
            kind = "holog"
            alpha = 0.4
            lambda = 0.0
            s_max = 0.8
            [grid]
            n = 256
            [sweep]
            eps_dyadic = { start = 0.8, count = 4 }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn valid_config_passes() {
        flux_cfg().validate().unwrap();
        assert_eq!(flux_cfg().sweep.eps_list(), vec![0.8, 0.4, 0.2, 0.1]);
    }

    #[test]
    fn every_violation_is_listed() {
        let mut c = flux_cfg();
        c.sweep.eps_dyadic = None;
        c.sweep.eps = vec![0.01, 1.5];
        c.grid.n = 64;
        match c.validate() {
            Err(Error::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("b^K")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("0.01")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("1.5")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SweepConfig::from_toml("experiment = \"flux_sweep\"\nbogus = 1").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let c = flux_cfg();
        assert_eq!(SweepConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
