//! Least-squares exponent extraction `log v = c + p·log s + q·log log(1/s)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of points in any fit.
pub const MIN_POINTS: usize = 4;
/// Minimum span of the scale variable, in octaves.
pub const MIN_OCTAVES: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `c + p·log s + q·log log(1/s)`.
    #[default]
    PowerLog,
    /// `c + p·log s` (`q` reported as 0).
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FitModel,
    pub p: f64,
    pub q: f64,
    pub c: f64,
    /// Root mean square of the residuals in `log v`.
    pub rms_residual: f64,
    pub n_points: usize,
    pub octaves: f64,
    /// Ratio of extreme singular values of the design matrix.
    pub condition: f64,
}

impl FitReport {
    pub fn predict(&self, s: f64) -> f64 {
        (self.c + self.p * s.ln() + self.q * (1.0 / s).ln().ln()).exp()
    }
}

pub fn fit_scaling(records: &[(f64, f64)]) -> Result<FitReport> {
    fit_scaling_with(records, FitModel::PowerLog)
}

/// Fits `records = [(s, v)]` by a rank-revealing least-squares solve of the
/// design matrix.
pub fn fit_scaling_with(records: &[(f64, f64)], model: FitModel) -> Result<FitReport> {
    let n = records.len();
    if n < MIN_POINTS {
        return Err(Error::Config(format!(
            "a fit needs at least {MIN_POINTS} points, got {n}"
        )));
    }
    if let Some(&(s, _)) = records.iter().find(|r| !(r.0 > 0.0 && r.0 < 1.0)) {
        return Err(Error::Domain(format!("scales must lie in (0, 1), got {s}")));
    }
    let bad: Vec<String> = records
        .iter()
        .filter(|r| !(r.1 > 0.0) || !r.1.is_finite())
        .map(|r| format!("v({}) = {}", r.0, r.1))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Domain(format!(
            "fitted values must be positive ({}); fit |v| and flag sign changes instead",
            bad.join(", ")
        )));
    }
    let (lo, hi) = records
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.0), hi.max(r.0)));
    let octaves = (hi / lo).log2();
    if octaves == 0.0 {
        return Err(Error::Rank(
            "all scales are equal, so the regressors are collinear".into(),
        ));
    }
    if octaves < MIN_OCTAVES - 1e-9 {
        return Err(Error::Config(format!(
            "scales span {octaves:.2} octaves; at least {MIN_OCTAVES} are needed for a well-conditioned fit"
        )));
    }
    let cols = match model {
        FitModel::PowerLog => 3,
        FitModel::Power => 2,
    };
    let x = DMatrix::from_fn(n, cols, |i, j| {
        let s = records[i].0;
        match j {
            0 => 1.0,
            1 => s.ln(),
            _ => (1.0 / s).ln().ln(),
        }
    });
    let y = DVector::from_iterator(n, records.iter().map(|r| r.1.ln()));
    let svd = x.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-12 * smax) {
        return Err(Error::Rank(format!(
            "design matrix is rank deficient (singular values {smin:e} / {smax:e})"
        )));
    }
    let beta = svd.solve(&y, 0.0).map_err(|e| Error::Rank(e.to_string()))?;
    let resid = &x * &beta - &y;
    let rms = (resid.norm_squared() / n as f64).sqrt();
    Ok(FitReport {
        model,
        c: beta[0],
        p: beta[1],
        q: if cols == 3 { beta[2] } else { 0.0 },
        rms_residual: rms,
        n_points: n,
        octaves,
        condition: smax / smin,
    })
}

/// Dyadic sequence `start, start/2, …` with `count` terms.
pub fn dyadic(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * 0.5f64.powi(k as i32)).collect()
}
