//! Sweep configuration, orchestration, exponent fits, persisted results and
//! the merged report. The command-line front end lives in `main.rs`.

mod config;
mod experiments;
mod fit;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;

pub use config::{
    Checks, Dyadic, EulerConfig, Experiment, FieldConfig, GridConfig, JConfig, LemmaConfig, OutputConfig,
    PressureConfig, SweepConfig, SweepList,
};
pub use experiments::{
    audit, disk_field, periodic_field, Audit, Check, Extra, Table, Violation, ECHO_COLUMNS, EULER_COLUMNS,
    FLUX_COLUMNS, J_COLUMNS, LEMMA_COLUMNS, SEMINORM_COLUMNS,
};
pub use fit::{dyadic, fit_scaling, fit_scaling_with, FitModel, FitReport, MIN_OCTAVES, MIN_POINTS};
pub use report::{read_table, render, report, MergedReport, ReportBlock, REPORT_FORMAT};

pub const SUMMARY_FORMAT: &str = "hologlab-summary/1";

/// JSON written next to every experiment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub format: String,
    pub experiment: Experiment,
    pub config: SweepConfig,
    /// CSV file name, relative to the summary's directory.
    pub csv: String,
    pub columns: Vec<String>,
    pub rows: usize,
    pub checks: Vec<Check>,
    pub violations: Vec<Violation>,
    pub fits: BTreeMap<String, FitReport>,
    pub extra: Extra,
    pub passed: bool,
}

impl ExperimentSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: ExperimentSummary,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Validates `cfg`, runs it, audits the resulting table and writes
/// `<stem>.csv` and `<stem>.summary.json` into `out_dir`.
pub fn run_experiment(cfg: &SweepConfig, out_dir: &Path, exec: Exec) -> Result<RunOutput> {
    cfg.validate()?;
    let (table, extra) = experiments::run_table(cfg, exec)?;
    let audit = audit(cfg.experiment, &table, &cfg.checks)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = cfg.stem();
    let csv_name = format!("{stem}.csv");
    let csv_path = out_dir.join(&csv_name);
    experiments::write_csv(&csv_path, &table)?;
    let summary = ExperimentSummary {
        format: SUMMARY_FORMAT.into(),
        experiment: cfg.experiment,
        config: cfg.clone(),
        csv: csv_name,
        columns: table.columns.clone(),
        rows: table.rows.len(),
        passed: audit.passed(),
        checks: audit.checks,
        violations: audit.violations,
        fits: audit.fits,
        extra,
    };
    let summary_path = out_dir.join(format!("{stem}.summary.json"));
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&summary_path, text + "\n").map_err(|e| Error::io(&summary_path, e))?;
    Ok(RunOutput {
        summary,
        csv_path,
        summary_path,
    })
}
