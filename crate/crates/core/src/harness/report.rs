//! Merges experiment summaries and re-audits their CSVs.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::experiments::{audit, read_csv, Check, Table, Violation};
use super::fit::FitReport;
use super::{Experiment, ExperimentSummary};

pub const REPORT_FORMAT: &str = "hologlab-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBlock {
    pub experiment: Experiment,
    pub summary: String,
    pub csv: String,
    pub rows: usize,
    pub checks: Vec<Check>,
    pub violations: Vec<Violation>,
    pub fits: BTreeMap<String, FitReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub format: String,
    pub experiments: Vec<ReportBlock>,
    pub violation_count: usize,
    pub passed: bool,
}

pub fn read_table(path: &Path) -> Result<Table> {
    read_csv(path)
}

/// Loads every summary, re-audits its CSV with the thresholds recorded in
/// the summary's config, and merges the results in argument order.
pub fn report(paths: &[PathBuf]) -> Result<MergedReport> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let summaries = paths
        .iter()
        .map(|p| ExperimentSummary::load(p))
        .collect::<Result<Vec<_>>>()?;
    let csvs: Vec<PathBuf> = paths
        .iter()
        .zip(&summaries)
        .map(|(p, s)| p.parent().unwrap_or(Path::new(".")).join(&s.csv))
        .collect();
    let missing: Vec<PathBuf> = csvs.iter().filter(|p| !p.exists()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let mut blocks = Vec::with_capacity(paths.len());
    for ((path, s), csv) in paths.iter().zip(&summaries).zip(&csvs) {
        let table = read_csv(csv)?;
        let a = audit(s.experiment, &table, &s.config.checks)?;
        blocks.push(ReportBlock {
            experiment: s.experiment,
            summary: path.display().to_string(),
            csv: csv.display().to_string(),
            rows: table.rows.len(),
            checks: a.checks,
            violations: a.violations,
            fits: a.fits,
        });
    }
    let violation_count = blocks.iter().map(|b| b.violations.len()).sum();
    Ok(MergedReport {
        format: REPORT_FORMAT.into(),
        experiments: blocks,
        violation_count,
        passed: violation_count == 0,
    })
}

/// Plain-text table of checks, fits and violations.
pub fn render(r: &MergedReport) -> String {
    let mut out = String::new();
    for b in &r.experiments {
        let _ = writeln!(out, "== {} ({} rows) {}", b.experiment.name(), b.rows, b.csv);
        for c in &b.checks {
            let _ = writeln!(
                out,
                "  [{}] {:<24} {}",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        for (name, f) in &b.fits {
            let _ = writeln!(
                out,
                "  fit {name}: p = {:.4}, q = {:.4}, c = {:.4}, rms = {:.2e}, n = {}",
                f.p, f.q, f.c, f.rms_residual, f.n_points
            );
        }
        for v in &b.violations {
            match v.row {
                Some(row) => {
                    let _ = writeln!(out, "  violation {} at row {row}: {}", v.check, v.detail);
                }
                None => {
                    let _ = writeln!(out, "  violation {}: {}", v.check, v.detail);
                }
            }
        }
    }
    let _ = writeln!(
        out,
        "{} violation(s) across {} experiment(s)",
        r.violation_count,
        r.experiments.len()
    );
    out
}
