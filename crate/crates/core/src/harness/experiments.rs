//! The five experiments, their fixed CSV layouts, and the audit that
//! re-checks every invariant from a CSV alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::boundary::{
    j_sweep, lemma_sweep, JOptions, LacunaryDisk, LemmaOptions, RadialField, RotationField, VectorSource, ZeroField,
};
use crate::commutator::{energy_flux_with, FluxOptions};
use crate::error::{Error, Result};
use crate::euler2d::{verify_energy_identity, EulerState, Solver};
use crate::fields::{
    gen_lacunary, gen_smooth_random, pressure_standin, project_divfree, Grid, SampledField, SmoothSpec,
};
use crate::modulus::{holog_seminorm_with, report_from_profile, seminorm_profile_with, Modulus};
use crate::mollify::{grad_mollified_with, make_kernel, mollify_with, ConvPath, ExtensionMode, MollifierKernel};
use crate::par::Exec;

use super::config::{Checks, Experiment, FieldConfig, SweepConfig};
use super::fit::{fit_scaling_with, FitModel, FitReport};

/// Columns and rows of one experiment's CSV, as text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn index(&self) -> BTreeMap<&str, usize> {
        self.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
    }

    fn get(&self, row: usize, col: &str) -> Result<f64> {
        let i = *self
            .index()
            .get(col)
            .ok_or_else(|| Error::Format(format!("CSV has no column {col}")))?;
        let s = &self.rows[row][i];
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("row {row}, column {col}: cannot parse {s:?}")))
    }

    fn column(&self, col: &str) -> Result<Vec<f64>> {
        (0..self.rows.len()).map(|r| self.get(r, col)).collect()
    }

    fn text(&self, row: usize, col: &str) -> Option<&str> {
        self.index().get(col).map(|&i| self.rows[row][i].as_str())
    }
}

pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Columns echoing the parameter tuple on every row.
pub const ECHO_COLUMNS: [&str; 11] = [
    "experiment",
    "seed",
    "field_kind",
    "field_alpha",
    "field_lambda",
    "field_base",
    "field_levels",
    "modulus_kind",
    "modulus_alpha",
    "modulus_lambda",
    "s_max",
];

fn echo(cfg: &SweepConfig, m: Option<&Modulus>) -> Vec<String> {
    let (fa, fl, fb, fk) = match cfg.field.lacunary_spec(cfg.seed) {
        Some(s) => (num(s.alpha), num(s.lambda), s.base.to_string(), s.levels.to_string()),
        None => match cfg.field {
            FieldConfig::Smooth { decay_rate, .. } => (String::new(), String::new(), String::new(), num(decay_rate)),
            _ => Default::default(),
        },
    };
    let (mk, ma, ml, sm) = match (m, &cfg.modulus) {
        (Some(m), Some(spec)) => {
            let kind = serde_json::to_value(spec)
                .ok()
                .and_then(|v| v["kind"].as_str().map(String::from))
                .unwrap_or_default();
            (kind, num(m.alpha()), num(m.lambda()), num(m.s_max))
        }
        _ => Default::default(),
    };
    vec![
        cfg.experiment.name().into(),
        cfg.seed.to_string(),
        cfg.field.kind().into(),
        fa,
        fl,
        fb,
        fk,
        mk,
        ma,
        ml,
        sm,
    ]
}

fn table_with(own: &[&str]) -> Table {
    let mut all: Vec<&str> = own.to_vec();
    all.extend(ECHO_COLUMNS);
    Table::new(&all)
}

pub const FLUX_COLUMNS: [&str; 15] = [
    "epsilon",
    "flux",
    "bound",
    "ratio",
    "mollify_gap",
    "mollify_bound",
    "grad_sup",
    "grad_bound",
    "seminorm_eps",
    "residual_identity",
    "null_flux",
    "null_scale",
    "k1",
    "seminorm",
    "n",
];

pub const LEMMA_COLUMNS: [&str; 11] = [
    "h",
    "sup_value",
    "integral_value",
    "bound_sup",
    "bound_integral",
    "seminorm",
    "collar_area",
    "eta_prime_sup",
    "nodes_across",
    "n_theta",
    "sample_n",
];

pub const J_COLUMNS: [&str; 26] = [
    "h",
    "eps",
    "dx",
    "n",
    "j21",
    "j221",
    "j222",
    "j31",
    "j321",
    "j322",
    "env_j21",
    "env_j221",
    "env_j222",
    "env_j31",
    "env_j321",
    "env_j322",
    "envelope_total",
    "j2",
    "j3",
    "seminorm",
    "u_sup",
    "p_sup",
    "k1",
    "eta_prime_sup",
    "cells_per_eps",
    "sample_n",
];

pub const EULER_COLUMNS: [&str; 15] = [
    "dt",
    "epsilon",
    "lhs_gap",
    "time_integral",
    "residual",
    "energy_gap",
    "energy0",
    "snapshots",
    "n_steps",
    "cfl_warnings",
    "n",
    "decay_rate",
    "u_max",
    "t_final",
    "kernel_floor",
];

pub const SEMINORM_COLUMNS: [&str; 6] = ["n", "value", "pair_count", "pair_i", "pair_j", "dx"];

/// Periodic test field of a flux sweep or seminorm report.
pub fn periodic_field(cfg: &SweepConfig, n: usize) -> Result<SampledField> {
    let grid = Grid::periodic(2, n)?;
    match &cfg.field {
        FieldConfig::Lacunary { .. } => {
            let spec = cfg.field.lacunary_spec(cfg.seed).expect("lacunary");
            gen_lacunary(&spec, &grid)
        }
        FieldConfig::Smooth { decay_rate, kmax } => {
            let spec = SmoothSpec {
                seed: cfg.seed,
                decay_rate: *decay_rate,
                components: 2,
                kmax: *kmax,
            };
            project_divfree(&gen_smooth_random(&spec, &grid)?)
        }
        other => Err(Error::Config(format!("{} is not a periodic field", other.kind()))),
    }
}

/// Analytic disk field of a lemma or J sweep.
pub fn disk_field(cfg: &SweepConfig, m: &Modulus) -> Result<Box<dyn VectorSource>> {
    Ok(match &cfg.field {
        FieldConfig::LacunaryDisk { scale, .. } => Box::new(LacunaryDisk::new(
            &cfg.field.lacunary_spec(cfg.seed).expect("lacunary"),
            *scale,
        )?),
        FieldConfig::NearExtremal => Box::new(RadialField::near_extremal(m.clone())),
        FieldConfig::Linear => Box::new(RadialField::linear()),
        FieldConfig::Rotation => Box::new(RotationField),
        FieldConfig::Zero => Box::new(ZeroField),
        other => return Err(Error::Config(format!("{} is not a disk field", other.kind()))),
    })
}

/// Side results reported in the summary next to the CSV.
pub type Extra = BTreeMap<String, serde_json::Value>;

pub(crate) fn run_table(cfg: &SweepConfig, exec: Exec) -> Result<(Table, Extra)> {
    match cfg.experiment {
        Experiment::FluxSweep => flux(cfg, exec),
        Experiment::LemmaSweep => lemma(cfg, exec),
        Experiment::JSweep => jsweep(cfg, exec),
        Experiment::EulerIdentity => euler(cfg, exec),
        Experiment::SeminormReport => seminorm(cfg, exec),
    }
}

fn flux(cfg: &SweepConfig, exec: Exec) -> Result<(Table, Extra)> {
    let m = cfg.modulus()?;
    let n = cfg.grid.n;
    let u = periodic_field(cfg, n)?;
    let profile = seminorm_profile_with(exec, &u, &m)?;
    let report = report_from_profile(&u, &profile);
    let s = report.value;
    let mut t = table_with(&FLUX_COLUMNS);
    let ech = echo(cfg, Some(&m));
    let opts = FluxOptions {
        exec,
        ..Default::default()
    };
    for eps in cfg.sweep.eps_list() {
        let k = make_kernel(eps, &u.grid)?;
        let f = energy_flux_with(opts, &u, &k, &m, s)?;
        log::info!("flux_sweep eps={eps}: flux={:e} bound={:e}", f.flux, f.bound);
        let me = m.eval(eps)?;
        let s_eps = profile.value_within(eps);
        let (gap, grad_sup) = pointwise_bounds(exec, &u, &k)?;
        let mut row = vec![
            num(eps),
            num(f.flux),
            num(f.bound),
            num(f.flux.abs() / f.bound),
            num(gap),
            num(me * s_eps),
            num(grad_sup),
            num(s * me * k.k1 / eps),
            num(s_eps),
            num(f.residual_identity),
            num(f.null_flux),
            num(f.null_scale),
            num(f.k1),
            num(s),
            n.to_string(),
        ];
        row.extend(ech.iter().cloned());
        t.push(row);
    }
    let mut extra = Extra::new();
    extra.insert("seminorm".into(), serde_json::json!(report));
    Ok((t, extra))
}

/// `sup|u − u^ε|` and `sup|∇u^ε|` (Euclidean and Frobenius norms), the
/// gradient taken through the sampled kernel gradient.
fn pointwise_bounds(exec: Exec, u: &SampledField, k: &MollifierKernel) -> Result<(f64, f64)> {
    let ue = mollify_with(exec, ConvPath::Auto, u, k, ExtensionMode::Periodic)?;
    let g = grad_mollified_with(exec, ConvPath::Auto, u, k, ExtensionMode::Periodic)?;
    let len = u.len();
    let mut gap = 0.0f64;
    let mut grad = 0.0f64;
    for p in 0..len {
        let d2: f64 = (0..u.components).map(|c| (u.at(c, p) - ue.at(c, p)).powi(2)).sum();
        let g2: f64 = (0..g.components).map(|c| g.at(c, p).powi(2)).sum();
        gap = gap.max(d2.sqrt());
        grad = grad.max(g2.sqrt());
    }
    Ok((gap, grad))
}

fn lemma(cfg: &SweepConfig, exec: Exec) -> Result<(Table, Extra)> {
    let m = cfg.modulus()?;
    let w = disk_field(cfg, &m)?;
    let opts = LemmaOptions {
        nodes_across: cfg.lemma.nodes_across,
        n_theta: cfg.lemma.n_theta,
        sample_n: cfg.lemma.sample_n,
        exec,
    };
    let recs = lemma_sweep(w.as_ref(), &m, &cfg.sweep.h_list(), &opts)?;
    let mut t = table_with(&LEMMA_COLUMNS);
    let ech = echo(cfg, Some(&m));
    for r in &recs {
        let mut row = vec![
            num(r.h),
            num(r.sup_value),
            num(r.integral_value),
            num(r.bound_sup),
            num(r.bound_integral),
            num(r.seminorm),
            num(r.collar_area),
            num(r.eta_prime_sup),
            opts.nodes_across.to_string(),
            opts.n_theta.to_string(),
            opts.sample_n.to_string(),
        ];
        row.extend(ech.iter().cloned());
        t.push(row);
    }
    let mut extra = Extra::new();
    if let Some(r) = recs.first() {
        extra.insert("eta_prime_sup".into(), serde_json::json!(r.eta_prime_sup));
    }
    Ok((t, extra))
}

fn jsweep(cfg: &SweepConfig, exec: Exec) -> Result<(Table, Extra)> {
    let m = cfg.modulus()?;
    let u = disk_field(cfg, &m)?;
    let pc = &cfg.pressure;
    let p = pressure_standin(cfg.seed, pc.decay_rate, pc.kmax, pc.p_inf)?;
    let j = &cfg.jsweep;
    let opts = JOptions {
        cells_per_eps: j.cells_per_eps,
        half_width: j.half_width,
        sample_n: j.sample_n,
        block_rows: j.block_rows,
        exec,
    };
    let mut t = table_with(&J_COLUMNS);
    let ech = echo(cfg, Some(&m));
    // one h at a time keeps a single fine grid in flight
    for h in cfg.sweep.h_list() {
        let r = j_sweep(u.as_ref(), &p, &m, &[h], &opts)?.remove(0);
        log::info!("j_sweep h={h}: n={} total envelope {:e}", r.n, r.envelope_total);
        let mut row: Vec<String> = [r.h, r.eps, r.dx]
            .iter()
            .map(|v| num(*v))
            .chain([r.n.to_string()])
            .chain(r.measured().iter().map(|v| num(*v)))
            .chain(r.envelopes().iter().map(|v| num(*v)))
            .chain(
                [
                    r.envelope_total,
                    r.j2,
                    r.j3,
                    r.seminorm,
                    r.u_sup,
                    r.p_sup,
                    r.k1,
                    r.eta_prime_sup,
                    j.cells_per_eps,
                ]
                .iter()
                .map(|v| num(*v)),
            )
            .chain([j.sample_n.to_string()])
            .collect();
        row.extend(ech.iter().cloned());
        t.push(row);
    }
    Ok((t, Extra::new()))
}

fn euler(cfg: &SweepConfig, exec: Exec) -> Result<(Table, Extra)> {
    let e = &cfg.euler;
    let init = EulerState::smooth_random(e.n, cfg.seed, e.decay_rate, e.u_max)?;
    let solver = Solver::new(init.grid(), exec)?;
    let kernels: Vec<MollifierKernel> = cfg
        .sweep
        .eps_list()
        .iter()
        .map(|&eps| MollifierKernel::with_floor(eps, init.grid(), e.kernel_floor))
        .collect::<Result<_>>()?;
    let mut t = table_with(&EULER_COLUMNS);
    let ech = echo(cfg, None);
    for &dt in &e.dt {
        let steps = (e.t_final / dt).round() as usize;
        let traj = solver.run(&init, dt, steps, e.snapshot_every)?;
        for k in &kernels {
            let id = verify_energy_identity(&traj, k, exec)?;
            let mut row = vec![
                num(dt),
                num(k.eps),
                num(id.lhs_gap),
                num(id.time_integral),
                num(id.residual),
                num(id.energy_gap),
                num(id.energy0),
                id.snapshots.to_string(),
                steps.to_string(),
                traj.warnings.len().to_string(),
                e.n.to_string(),
                num(e.decay_rate),
                num(e.u_max),
                num(e.t_final),
                num(e.kernel_floor),
            ];
            row.extend(ech.iter().cloned());
            t.push(row);
        }
    }
    Ok((t, Extra::new()))
}

fn seminorm(cfg: &SweepConfig, exec: Exec) -> Result<(Table, Extra)> {
    let m = cfg.modulus()?;
    let mut t = table_with(&SEMINORM_COLUMNS);
    let ech = echo(cfg, Some(&m));
    for n in cfg.grid_sizes() {
        let f = periodic_field(cfg, n)?;
        let r = holog_seminorm_with(exec, &f, &m)?;
        let mut row = vec![
            n.to_string(),
            num(r.value),
            r.pair_count.to_string(),
            r.attaining_pair.0.to_string(),
            r.attaining_pair.1.to_string(),
            num(f.grid.spacing()),
        ];
        row.extend(ech.iter().cloned());
        t.push(row);
    }
    Ok((t, Extra::new()))
}

/// Outcome of one invariant over a whole table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// One failing record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    /// Zero-based CSV data row, when the violation belongs to one row.
    pub row: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Audit {
    pub checks: Vec<Check>,
    pub violations: Vec<Violation>,
    pub fits: BTreeMap<String, FitReport>,
}

impl Audit {
    fn rowwise(&mut self, name: &str, results: Vec<(usize, bool, String)>) {
        let total = results.len();
        let mut failed = 0;
        for (row, ok, detail) in results {
            if !ok {
                failed += 1;
                self.violations.push(Violation {
                    check: name.into(),
                    row: Some(row),
                    detail,
                });
            }
        }
        self.checks.push(Check {
            name: name.into(),
            passed: failed == 0,
            detail: format!("{} of {total} rows pass", total - failed),
        });
    }

    fn single(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.violations.push(Violation {
                check: name.into(),
                row: None,
                detail: detail.clone(),
            });
        }
        self.checks.push(Check {
            name: name.into(),
            passed: ok,
            detail,
        });
    }

    fn fit(&mut self, name: &str, pts: &[(f64, f64)], model: FitModel) -> Option<FitReport> {
        match fit_scaling_with(pts, model) {
            Ok(f) => {
                self.fits.insert(name.into(), f);
                Some(f)
            }
            Err(e) => {
                self.single(&format!("{name}_fit"), false, e.to_string());
                None
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn le(v: f64, bound: f64, slack: f64) -> bool {
    v <= bound * (1.0 + slack) || v <= bound + slack * f64::MIN_POSITIVE
}

/// Re-derives every invariant of `experiment` from its CSV.
pub fn audit(experiment: Experiment, t: &Table, c: &Checks) -> Result<Audit> {
    let mut a = Audit::default();
    let rows = t.rows.len();
    if rows == 0 {
        a.single("non_empty", false, "the CSV has no data rows".into());
        return Ok(a);
    }
    match experiment {
        Experiment::FluxSweep => {
            let (eps, flux, bound) = (t.column("epsilon")?, t.column("flux")?, t.column("bound")?);
            let (res, nf, ns) = (
                t.column("residual_identity")?,
                t.column("null_flux")?,
                t.column("null_scale")?,
            );
            a.rowwise(
                "flux_le_bound",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            le(flux[r].abs(), bound[r], c.bound_slack),
                            format!("eps={}: |flux| {:e} vs bound {:e}", eps[r], flux[r].abs(), bound[r]),
                        )
                    })
                    .collect(),
            );
            let (gap, gap_b) = (t.column("mollify_gap")?, t.column("mollify_bound")?);
            let (gs, gs_b) = (t.column("grad_sup")?, t.column("grad_bound")?);
            a.rowwise(
                "mollify_le_bound",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            le(gap[r], gap_b[r], c.bound_slack),
                            format!("eps={}: sup|u-u^eps| {:e} vs {:e}", eps[r], gap[r], gap_b[r]),
                        )
                    })
                    .collect(),
            );
            a.rowwise(
                "grad_le_bound",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            le(gs[r], gs_b[r], c.bound_slack),
                            format!("eps={}: sup|grad u^eps| {:e} vs {:e}", eps[r], gs[r], gs_b[r]),
                        )
                    })
                    .collect(),
            );
            a.rowwise(
                "cet_identity",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            res[r] <= c.residual_identity_max,
                            format!("eps={}: residual {:e} > {:e}", eps[r], res[r], c.residual_identity_max),
                        )
                    })
                    .collect(),
            );
            a.rowwise(
                "null_flux",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            nf[r].abs() <= c.null_flux_rel_max * ns[r],
                            format!(
                                "eps={}: |null flux| {:e} > {:e}·{:e}",
                                eps[r],
                                nf[r].abs(),
                                c.null_flux_rel_max,
                                ns[r]
                            ),
                        )
                    })
                    .collect(),
            );
            let alpha = t.get(0, "modulus_alpha")?;
            let lambda = t.get(0, "modulus_lambda")?;
            if let Some(floor) = c.min_decay_exponent {
                let model = c.fit_model.unwrap_or(if lambda == 0.0 {
                    FitModel::Power
                } else {
                    FitModel::PowerLog
                });
                let pts: Vec<(f64, f64)> = eps.iter().zip(&flux).map(|(e, f)| (*e, f.abs())).collect();
                if let Some(f) = a.fit("flux_decay", &pts, model) {
                    a.single(
                        "flux_decay_exponent",
                        f.p >= floor,
                        format!("fitted p = {:.4}, floor {floor}", f.p),
                    );
                }
            }
            if let Some(cap) = c.max_normalised_growth {
                let g: Vec<f64> = eps
                    .iter()
                    .zip(&flux)
                    .map(|(e, f)| f.abs() / (e.powf(3.0 * alpha - 1.0) * (1.0 / e).ln().powf(-3.0 * lambda)))
                    .collect();
                let top = (0..rows).max_by(|&i, &j| eps[i].total_cmp(&eps[j])).expect("rows");
                let growth = g.iter().cloned().fold(0.0, f64::max) / g[top];
                a.single(
                    "normalised_growth",
                    growth <= cap,
                    format!("max g / g(eps_max) = {growth:.4}, cap {cap}"),
                );
            }
        }
        Experiment::LemmaSweep => {
            let h = t.column("h")?;
            let (sup, bs) = (t.column("sup_value")?, t.column("bound_sup")?);
            let (int, bi) = (t.column("integral_value")?, t.column("bound_integral")?);
            a.rowwise(
                "sup_le_bound",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            le(sup[r], bs[r], c.bound_slack),
                            format!("h={}: sup {:e} vs bound {:e}", h[r], sup[r], bs[r]),
                        )
                    })
                    .collect(),
            );
            a.rowwise(
                "integral_le_bound",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            le(int[r], bi[r], c.bound_slack),
                            format!("h={}: integral {:e} vs bound {:e}", h[r], int[r], bi[r]),
                        )
                    })
                    .collect(),
            );
            if c.expect_zero {
                a.rowwise(
                    "vanishes",
                    (0..rows)
                        .map(|r| {
                            (
                                r,
                                sup[r] <= c.zero_tol && int[r].abs() <= c.zero_tol,
                                format!("h={}: sup {:e}, integral {:e}", h[r], sup[r], int[r]),
                            )
                        })
                        .collect(),
                );
            }
            let model = c.fit_model.unwrap_or(FitModel::PowerLog);
            for (name, vals, target) in [("sup", &sup, c.sup_exponent), ("integral", &int, c.integral_exponent)] {
                if let Some(target) = target {
                    let pts: Vec<(f64, f64)> = h.iter().zip(vals.iter()).map(|(h, v)| (*h, *v)).collect();
                    if let Some(f) = a.fit(&format!("{name}_scaling"), &pts, model) {
                        a.single(
                            &format!("{name}_exponent"),
                            (f.p - target).abs() <= c.exponent_tol,
                            format!("fitted p = {:.4}, target {target} ± {}", f.p, c.exponent_tol),
                        );
                    }
                }
            }
        }
        Experiment::JSweep => {
            let h = t.column("h")?;
            for term in ["j21", "j221", "j222", "j31", "j321", "j322"] {
                let (v, env) = (t.column(term)?, t.column(&format!("env_{term}"))?);
                a.rowwise(
                    &format!("{term}_le_envelope"),
                    (0..rows)
                        .map(|r| {
                            (
                                r,
                                le(v[r].abs(), env[r], c.bound_slack),
                                format!("h={}: |{term}| {:e} vs envelope {:e}", h[r], v[r].abs(), env[r]),
                            )
                        })
                        .collect(),
                );
            }
            let mut order: Vec<usize> = (0..rows).collect();
            order.sort_by(|&i, &j| h[j].total_cmp(&h[i]));
            if c.envelope_monotone {
                let env = t.column("envelope_total")?;
                let ok = order.windows(2).all(|w| env[w[1]] < env[w[0]]);
                let seq: Vec<String> = order.iter().map(|&r| format!("{:e}", env[r])).collect();
                a.single(
                    "envelope_decreasing",
                    ok,
                    format!("total envelope as h decreases: {}", seq.join(", ")),
                );
            }
            if let Some(slack) = c.measured_decay_slack {
                let (j2, j3) = (t.column("j2")?, t.column("j3")?);
                let tot: Vec<f64> = (0..rows).map(|r| j2[r].abs() + j3[r].abs()).collect();
                let ok = order.windows(2).all(|w| tot[w[1]] <= (1.0 + slack) * tot[w[0]]);
                let seq: Vec<String> = order.iter().map(|&r| format!("{:e}", tot[r])).collect();
                a.single(
                    "measured_decreasing",
                    ok,
                    format!("|J2|+|J3| as h decreases: {}", seq.join(", ")),
                );
            }
        }
        Experiment::EulerIdentity => {
            let (dt, eps) = (t.column("dt")?, t.column("epsilon")?);
            let (res, gap, e0) = (t.column("residual")?, t.column("energy_gap")?, t.column("energy0")?);
            a.rowwise(
                "identity_residual",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            res[r] <= c.euler_residual_max * e0[r],
                            format!(
                                "dt={}, eps={}: residual {:e} vs {:e}·E0",
                                dt[r], eps[r], res[r], c.euler_residual_max
                            ),
                        )
                    })
                    .collect(),
            );
            a.rowwise(
                "energy_drift",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            gap[r].abs() <= c.energy_drift_max * e0[r],
                            format!(
                                "dt={}: |energy gap| {:e} vs {:e}·E0",
                                dt[r],
                                gap[r].abs(),
                                c.energy_drift_max
                            ),
                        )
                    })
                    .collect(),
            );
            // residual shrink between dt and dt/2 at equal eps
            let mut pairs = Vec::new();
            for i in 0..rows {
                for j in 0..rows {
                    if eps[i] == eps[j] && (dt[i] / dt[j] - 2.0).abs() < 1e-9 {
                        pairs.push((i, j));
                    }
                }
            }
            if !pairs.is_empty() {
                a.rowwise(
                    "residual_shrinks",
                    pairs
                        .iter()
                        .map(|&(i, j)| {
                            let f = res[i] / res[j];
                            (
                                j,
                                f >= c.euler_min_shrink,
                                format!("eps={}: residual ratio dt={} / dt={} is {f:.3}", eps[i], dt[i], dt[j]),
                            )
                        })
                        .collect(),
                );
            }
        }
        Experiment::SeminormReport => {
            let v = t.column("value")?;
            a.rowwise(
                "finite_seminorm",
                (0..rows)
                    .map(|r| {
                        (
                            r,
                            v[r].is_finite() && v[r] >= 0.0,
                            format!("n={:?}: value {}", t.text(r, "n"), v[r]),
                        )
                    })
                    .collect(),
            );
        }
    }
    Ok(a)
}

pub(crate) fn write_csv(path: &std::path::Path, t: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&t.columns).map_err(|e| csv_err(path, e))?;
    for r in &t.rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_csv(path: &std::path::Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let columns = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| csv_err(path, e))
        })
        .collect::<Result<_>>()?;
    Ok(Table { columns, rows })
}

fn csv_err(path: &std::path::Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}
