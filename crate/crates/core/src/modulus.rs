//! Moduli of continuity `m(s) = ω(s)·s^α` and discrete seminorms of sampled
//! fields measured against them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, SampledField};
use crate::par::{self, Exec};

pub const DEFAULT_S_MAX: f64 = 0.5;

/// A user-supplied non-decreasing `ω` with `ω(0⁺) = 0`.
#[derive(Clone)]
pub struct Omega {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    table: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for Omega {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "Omega(table with {} knots)", t.len()),
            None => write!(f, "Omega(<fn>)"),
        }
    }
}

impl Omega {
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Omega {
            f: Arc::new(f),
            table: None,
        }
    }

    /// Piecewise-linear `ω` through `(s, ω)` knots, anchored at `ω(0) = 0`
    /// and held constant past the last knot.
    pub fn from_table(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Config("omega table needs at least one knot".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) || knots[0].0 <= 0.0 {
            return Err(Error::Config(
                "omega knots must have strictly increasing positive s".into(),
            ));
        }
        let mut pts = vec![(0.0, 0.0)];
        pts.extend(knots.iter().copied());
        let table = knots.clone();
        Ok(Omega {
            f: Arc::new(move |s: f64| {
                if s >= pts[pts.len() - 1].0 {
                    return pts[pts.len() - 1].1;
                }
                let j = pts.partition_point(|p| p.0 <= s);
                let (a, b) = (pts[j - 1], pts[j]);
                a.1 + (b.1 - a.1) * (s - a.0) / (b.0 - a.0)
            }),
            table: Some(table),
        })
    }

    pub fn table(&self) -> Option<&[(f64, f64)]> {
        self.table.as_deref()
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }
}

#[derive(Debug, Clone)]
pub enum ModulusKind {
    /// `ω(s) = (log 1/s)^{-λ}`.
    Holog {
        alpha: f64,
        lambda: f64,
    },
    General {
        alpha: f64,
        omega: Omega,
    },
    Holder {
        alpha: f64,
    },
}

/// A modulus of continuity restricted to separations in `(0, s_max]`.
#[derive(Debug, Clone)]
pub struct Modulus {
    pub kind: ModulusKind,
    pub s_max: f64,
}

/// Serializable description of a [`Modulus`] used by configs and CSV echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusSpec {
    Holog {
        alpha: f64,
        lambda: f64,
        #[serde(default = "default_s_max")]
        s_max: f64,
    },
    Holder {
        alpha: f64,
        #[serde(default = "default_s_max")]
        s_max: f64,
    },
    General {
        alpha: f64,
        omega: Vec<(f64, f64)>,
        #[serde(default = "default_s_max")]
        s_max: f64,
    },
}

fn default_s_max() -> f64 {
    DEFAULT_S_MAX
}

impl ModulusSpec {
    pub fn build(&self) -> Result<Modulus> {
        match self {
            ModulusSpec::Holog { alpha, lambda, s_max } => Modulus::holog(*alpha, *lambda)?.with_s_max(*s_max),
            ModulusSpec::Holder { alpha, s_max } => Modulus::holder(*alpha)?.with_s_max(*s_max),
            ModulusSpec::General { alpha, omega, s_max } => {
                Modulus::general(*alpha, Omega::from_table(omega.clone())?, *s_max)
            }
        }
    }
}

impl Modulus {
    pub fn holog(alpha: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "holog modulus needs alpha in [0,1) and finite lambda, got alpha={alpha}, lambda={lambda}"
            )));
        }
        Ok(Modulus {
            kind: ModulusKind::Holog { alpha, lambda },
            s_max: DEFAULT_S_MAX,
        })
    }

    pub fn holder(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!(
                "holder modulus needs alpha in (0,1], got {alpha}"
            )));
        }
        Ok(Modulus {
            kind: ModulusKind::Holder { alpha },
            s_max: DEFAULT_S_MAX,
        })
    }

    /// A general modulus. `ω` is checked on a geometric sample of
    /// `(0, s_max]`: it must be positive, finite, non-decreasing, and
    /// strictly smaller at the bottom of the sample than at `s_max`.
    pub fn general(alpha: f64, omega: Omega, s_max: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha must lie in [0,1), got {alpha}")));
        }
        check_s_max(s_max)?;
        let samples: Vec<f64> = (0..=1000)
            .map(|i| s_max * (1e-12f64).powf(1.0 - i as f64 / 1000.0))
            .collect();
        let vals: Vec<f64> = samples.iter().map(|&s| omega.eval(s)).collect();
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("omega must be positive and finite on (0, s_max]".into()));
        }
        if let Some(w) = vals.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Domain(format!(
                "omega decreases between s={} and s={}",
                samples[w],
                samples[w + 1]
            )));
        }
        if !(vals[0] < vals[vals.len() - 1]) {
            return Err(Error::Domain("omega must tend to zero as s -> 0".into()));
        }
        Ok(Modulus {
            kind: ModulusKind::General { alpha, omega },
            s_max,
        })
    }

    pub fn with_s_max(mut self, s_max: f64) -> Result<Self> {
        check_s_max(s_max)?;
        self.s_max = s_max;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        match &self.kind {
            ModulusKind::Holog { alpha, .. } | ModulusKind::General { alpha, .. } | ModulusKind::Holder { alpha } => {
                *alpha
            }
        }
    }

    /// `λ` of a holog modulus, 0 otherwise.
    pub fn lambda(&self) -> f64 {
        match &self.kind {
            ModulusKind::Holog { lambda, .. } => *lambda,
            _ => 0.0,
        }
    }

    /// `m(s)` without the range check. Callers guarantee `0 < s < 1`.
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match &self.kind {
            ModulusKind::Holog { alpha, lambda } => (1.0 / s).ln().powf(-lambda) * s.powf(*alpha),
            ModulusKind::General { alpha, omega } => omega.eval(s) * s.powf(*alpha),
            ModulusKind::Holder { alpha } => s.powf(*alpha),
        }
    }

    /// Evaluates `m(s) = ω(s)·s^α` for `s ∈ (0, s_max]`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s <= self.s_max) {
            return Err(Error::Domain(format!(
                "separation {s} outside the admissible interval (0, {}]",
                self.s_max
            )));
        }
        Ok(self.value(s))
    }

    pub fn spec(&self) -> Option<ModulusSpec> {
        Some(match &self.kind {
            ModulusKind::Holog { alpha, lambda } => ModulusSpec::Holog {
                alpha: *alpha,
                lambda: *lambda,
                s_max: self.s_max,
            },
            ModulusKind::Holder { alpha } => ModulusSpec::Holder {
                alpha: *alpha,
                s_max: self.s_max,
            },
            ModulusKind::General { alpha, omega } => ModulusSpec::General {
                alpha: *alpha,
                omega: omega.table()?.to_vec(),
                s_max: self.s_max,
            },
        })
    }
}

fn check_s_max(s_max: f64) -> Result<()> {
    if !(s_max > 0.0 && s_max < 1.0) {
        return Err(Error::Domain(format!("s_max must lie in (0, 1), got {s_max}")));
    }
    Ok(())
}

/// Free-function form of [`Modulus::eval`].
pub fn modulus_eval(m: &Modulus, s: f64) -> Result<f64> {
    m.eval(s)
}

/// Result of a discrete seminorm: the maximal ratio and the grid pair that
/// attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub value: f64,
    pub attaining_pair: (usize, usize),
    pub pair_count: u64,
}

/// Grid offsets (in cells) of length at most `s_max`, one representative
/// per `±` pair, sorted by length then lexicographically.
pub fn half_offsets(grid: &Grid, s_max: f64) -> Vec<([i64; 2], f64)> {
    let r = (s_max / grid.spacing()).floor() as i64 + 1;
    let mut out = Vec::new();
    let half = (grid.n as i64 - 1) / 2;
    let r = if grid.is_periodic() {
        r.min(half)
    } else {
        r.min(grid.n as i64 - 1)
    };
    if grid.dim == 1 {
        for k in 1..=r {
            out.push([k, 0]);
        }
    } else {
        for a in 0..=r {
            for b in -r..=r {
                if a == 0 && b <= 0 {
                    continue;
                }
                out.push([a, b]);
            }
        }
    }
    let mut out: Vec<_> = out
        .into_iter()
        .map(|o| (o, grid.offset_length(o)))
        .filter(|&(_, l)| l > 0.0 && l <= s_max * (1.0 + 1e-12))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Runs `(start, shifted start, len)` along one axis of `n` nodes.
fn axis_runs(n: i64, periodic: bool, k: i64) -> Vec<(i64, i64, i64)> {
    if periodic {
        let k = k.rem_euclid(n);
        if k == 0 {
            vec![(0, 0, n)]
        } else {
            vec![(0, k, n - k), (n - k, 0, k)]
        }
    } else if k.abs() >= n {
        vec![]
    } else if k >= 0 {
        vec![(0, k, n - k)]
    } else {
        vec![(-k, 0, n + k)]
    }
}

/// Contiguous runs `(base_start, shifted_start, len)` pairing node `i` with
/// node `i + off`. Indices are flat; rows of 2-D grids are split so each run
/// stays in one row.
pub(crate) fn pair_runs(grid: &Grid, off: [i64; 2]) -> Vec<(usize, usize, usize)> {
    let n = grid.n as i64;
    let axis_runs = |k: i64| axis_runs(n, grid.is_periodic(), k);
    let mut runs = Vec::new();
    if grid.dim == 1 {
        for (s, t, l) in axis_runs(off[0]) {
            runs.push((s as usize, t as usize, l as usize));
        }
    } else {
        let col = axis_runs(off[1]);
        for (rs, rt, rl) in axis_runs(off[0]) {
            for r in 0..rl {
                let (r0, r1) = (rs + r, rt + r);
                for &(cs, ct, cl) in &col {
                    runs.push(((r0 * n + cs) as usize, (r1 * n + ct) as usize, cl as usize));
                }
            }
        }
    }
    runs.retain(|r| r.2 > 0);
    runs
}

/// `max` without NaN handling, which lets the loops below vectorise.
#[inline(always)]
fn fast_max(a: f64, b: f64) -> f64 {
    if b > a {
        b
    } else {
        a
    }
}

/// `max_i (b_i − a_i)²`, written for auto-vectorisation.
fn sq_max1(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .fold(0.0, |m, (x, y)| fast_max(m, (y - x) * (y - x)));
    for (x, y) in ac.zip(bc) {
        for j in 0..4 {
            let d = y[j] - x[j];
            acc[j] = fast_max(acc[j], d * d);
        }
    }
    acc.into_iter().fold(tail, fast_max)
}

/// `max_i |b_i − a_i|²` for two-component data.
fn sq_max2(a0: &[f64], a1: &[f64], b0: &[f64], b1: &[f64]) -> f64 {
    let l = a0.len();
    let (a1, b0, b1) = (&a1[..l], &b0[..l], &b1[..l]);
    let mut acc = [0.0f64; 4];
    let main = l / 4 * 4;
    let mut i = 0;
    while i < main {
        for j in 0..4 {
            let d0 = b0[i + j] - a0[i + j];
            let d1 = b1[i + j] - a1[i + j];
            acc[j] = fast_max(acc[j], d0 * d0 + d1 * d1);
        }
        i += 4;
    }
    let mut tail = 0.0f64;
    for i in main..l {
        let d0 = b0[i] - a0[i];
        let d1 = b1[i] - a1[i];
        tail = fast_max(tail, d0 * d0 + d1 * d1);
    }
    acc.into_iter().fold(tail, fast_max)
}

/// Largest squared Euclidean increment over one offset, with the count of
/// admitted pairs. Masked nodes are skipped.
fn max_sq_increment(f: &SampledField, off: [i64; 2]) -> (f64, u64) {
    let len = f.len();
    let mut best = 0.0f64;
    let mut count = 0u64;
    for (s, t, l) in pair_runs(&f.grid, off) {
        match &f.mask {
            None => {
                count += l as u64;
                let run = match f.components {
                    1 => {
                        let v = &f.values[..len];
                        sq_max1(&v[s..s + l], &v[t..t + l])
                    }
                    2 => {
                        let (v0, v1) = f.values.split_at(len);
                        sq_max2(&v0[s..s + l], &v1[s..s + l], &v0[t..t + l], &v1[t..t + l])
                    }
                    _ => (0..l)
                        .map(|i| {
                            (0..f.components)
                                .map(|c| (f.at(c, t + i) - f.at(c, s + i)).powi(2))
                                .sum::<f64>()
                        })
                        .fold(0.0, fast_max),
                };
                best = best.max(run);
            }
            Some(m) => {
                for i in 0..l {
                    if !(m[s + i] && m[t + i]) {
                        continue;
                    }
                    count += 1;
                    let d2: f64 = (0..f.components)
                        .map(|c| (f.at(c, t + i) - f.at(c, s + i)).powi(2))
                        .sum();
                    best = best.max(d2);
                }
            }
        }
    }
    (best, count)
}

/// Squared-increment maxima for a batch of offsets. Unmasked 2-D fields
/// are swept row by row so the rows within reach of an offset stay in
/// cache; otherwise each offset is scanned separately.
fn batch_sq_increments(exec: Exec, f: &SampledField, offs: &[([i64; 2], f64)]) -> Vec<(f64, u64)> {
    if f.grid.dim != 2 || f.components > 2 {
        return par::map(exec, offs.len(), |i| max_sq_increment(f, offs[i].0));
    }
    if let Some(mask) = &f.mask {
        if f.grid.is_periodic() {
            return par::map(exec, offs.len(), |i| max_sq_increment(f, offs[i].0));
        }
        return masked_box_increments(exec, f, mask, offs);
    }
    const ROWS: usize = 8;
    let n = f.grid.n;
    let ni = n as i64;
    let periodic = f.grid.is_periodic();
    let len = f.len();
    let comps = f.components;
    let col_runs: Vec<_> = offs.iter().map(|(o, _)| axis_runs(ni, periodic, o[1])).collect();
    let partial = par::map(exec, n.div_ceil(ROWS), |chunk| {
        let mut best = vec![0.0f64; offs.len()];
        for r in chunk * ROWS..((chunk + 1) * ROWS).min(n) {
            for (o, ((off, _), runs)) in offs.iter().zip(&col_runs).enumerate() {
                let r2 = r as i64 + off[0];
                let r2 = if periodic {
                    r2.rem_euclid(ni)
                } else if (0..ni).contains(&r2) {
                    r2
                } else {
                    continue;
                };
                let (b0, b1) = (r * n, r2 as usize * n);
                for &(cs, ct, cl) in runs {
                    let (s, t, l) = (b0 + cs as usize, b1 + ct as usize, cl as usize);
                    let m = if comps == 1 {
                        let v = &f.values[..len];
                        sq_max1(&v[s..s + l], &v[t..t + l])
                    } else {
                        let (v0, v1) = f.values.split_at(len);
                        sq_max2(&v0[s..s + l], &v1[s..s + l], &v0[t..t + l], &v1[t..t + l])
                    };
                    best[o] = fast_max(best[o], m);
                }
            }
        }
        best
    });
    let mut best = vec![0.0f64; offs.len()];
    for p in partial {
        for (b, v) in best.iter_mut().zip(p) {
            *b = fast_max(*b, v);
        }
    }
    best.into_iter()
        .zip(offs)
        .map(|(b, (o, _))| (b, pair_count(f, *o)))
        .collect()
}

/// Maximal runs of `true` in each row of a 2-D mask.
fn row_intervals(mask: &[bool], n: usize) -> Vec<Vec<(usize, usize)>> {
    mask.chunks(n)
        .map(|row| {
            let mut out = Vec::new();
            let mut j = 0;
            while j < n {
                if row[j] {
                    let s = j;
                    while j < n && row[j] {
                        j += 1;
                    }
                    out.push((s, j));
                } else {
                    j += 1;
                }
            }
            out
        })
        .collect()
}

/// Masked box-grid variant of [`batch_sq_increments`]: admissible pairs in
/// a row pair are intersections of the two rows' mask intervals.
fn masked_box_increments(exec: Exec, f: &SampledField, mask: &[bool], offs: &[([i64; 2], f64)]) -> Vec<(f64, u64)> {
    const ROWS: usize = 8;
    let n = f.grid.n;
    let len = f.len();
    let comps = f.components;
    let rows = row_intervals(mask, n);
    let partial = par::map(exec, n.div_ceil(ROWS), |chunk| {
        let mut best = vec![(0.0f64, 0u64); offs.len()];
        for r in chunk * ROWS..((chunk + 1) * ROWS).min(n) {
            for (o, (off, _)) in offs.iter().enumerate() {
                let r2 = r as i64 + off[0];
                if !(0..n as i64).contains(&r2) {
                    continue;
                }
                let b = off[1];
                for &(s0, e0) in &rows[r] {
                    for &(s1, e1) in &rows[r2 as usize] {
                        let lo = (s0 as i64).max(s1 as i64 - b);
                        let hi = (e0 as i64).min(e1 as i64 - b);
                        if hi <= lo {
                            continue;
                        }
                        let (s, t, l) = (
                            r * n + lo as usize,
                            r2 as usize * n + (lo + b) as usize,
                            (hi - lo) as usize,
                        );
                        let m = if comps == 1 {
                            let v = &f.values[..len];
                            sq_max1(&v[s..s + l], &v[t..t + l])
                        } else {
                            let (v0, v1) = f.values.split_at(len);
                            sq_max2(&v0[s..s + l], &v1[s..s + l], &v0[t..t + l], &v1[t..t + l])
                        };
                        best[o].0 = fast_max(best[o].0, m);
                        best[o].1 += l as u64;
                    }
                }
            }
        }
        best
    });
    let mut best = vec![(0.0f64, 0u64); offs.len()];
    for p in partial {
        for (b, v) in best.iter_mut().zip(p) {
            b.0 = fast_max(b.0, v.0);
            b.1 += v.1;
        }
    }
    best
}

/// First pair (in scan order) with the largest squared increment at `off`.
fn first_pair_attaining(f: &SampledField, off: [i64; 2]) -> (usize, usize) {
    let mut best = (-1.0, (0, 0));
    for (s, t, l) in pair_runs(&f.grid, off) {
        for i in 0..l {
            if !(f.inside(s + i) && f.inside(t + i)) {
                continue;
            }
            let d2: f64 = (0..f.components)
                .map(|c| (f.at(c, t + i) - f.at(c, s + i)).powi(2))
                .sum();
            if d2 > best.0 {
                best = (d2, (s + i, t + i));
            }
        }
    }
    best.1
}

/// Maximum of `|f(x+y) − f(x)| / m(|y|)` for one offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEntry {
    pub offset: [i64; 2],
    pub length: f64,
    /// Largest increment. When `exact` is false this is only an upper bound.
    pub increment: f64,
    pub ratio: f64,
    pub pairs: u64,
    /// False for offsets skipped because `osc(f) / m(|y|)` could not beat
    /// the ratio already found at shorter separations.
    pub exact: bool,
}

/// Per-offset seminorm profile, sorted by separation.
#[derive(Debug, Clone)]
pub struct SeminormProfile {
    pub entries: Vec<ProfileEntry>,
}

impl SeminormProfile {
    fn within(&self, s: f64) -> impl Iterator<Item = &ProfileEntry> {
        self.entries.iter().take_while(move |e| e.length <= s * (1.0 + 1e-12))
    }

    /// Seminorm restricted to pairs at most `s` apart (exact: skipped
    /// offsets cannot exceed it).
    pub fn value_within(&self, s: f64) -> f64 {
        self.within(s).filter(|e| e.exact).map(|e| e.ratio).fold(0.0, f64::max)
    }

    /// Largest increment `|f(x+y) − f(x)|` over pairs at most `s` apart.
    /// An upper bound if `s` reaches skipped offsets.
    pub fn max_increment_within(&self, s: f64) -> f64 {
        self.within(s).map(|e| e.increment).fold(0.0, f64::max)
    }
}

/// Euclidean diameter of the (masked) range of `f`, bounding every increment.
fn oscillation(f: &SampledField) -> f64 {
    (0..f.components)
        .map(|c| {
            let (lo, hi) = f
                .component(c)
                .iter()
                .enumerate()
                .filter(|(i, _)| f.inside(*i))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| {
                    (lo.min(v), hi.max(v))
                });
            if hi >= lo {
                (hi - lo).powi(2)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .sqrt()
}

fn pair_count(f: &SampledField, off: [i64; 2]) -> u64 {
    pair_runs(&f.grid, off)
        .into_iter()
        .map(|(s, t, l)| match &f.mask {
            None => l as u64,
            Some(m) => (0..l).filter(|&i| m[s + i] && m[t + i]).count() as u64,
        })
        .sum()
}

/// Computes the per-offset profile over all offsets up to `m.s_max`.
///
/// Offsets are visited in order of length, in batches. Once `osc(f)/m(|y|)`
/// drops below the running maximum, the remaining offsets are skipped
/// (`m` is non-decreasing, so none of them can attain the maximum).
pub fn seminorm_profile_with(exec: Exec, f: &SampledField, m: &Modulus) -> Result<SeminormProfile> {
    if f.len() < 2 {
        return Err(Error::Config("seminorm needs at least two grid points".into()));
    }
    let offsets = half_offsets(&f.grid, m.s_max);
    if offsets.is_empty() {
        return Err(Error::Config(format!(
            "no admissible pairs: s_max = {} is below the grid spacing {}",
            m.s_max,
            f.grid.spacing()
        )));
    }
    const BATCH: usize = 2048;
    let osc = oscillation(f);
    let mut entries = Vec::with_capacity(offsets.len());
    let mut best = 0.0f64;
    let mut start = 0;
    while start < offsets.len() {
        let (_, len) = offsets[start];
        if osc / m.value(len) <= best {
            break;
        }
        let end = (start + BATCH).min(offsets.len());
        let batch: Vec<ProfileEntry> = batch_sq_increments(exec, f, &offsets[start..end])
            .into_iter()
            .zip(&offsets[start..end])
            .map(|((d2, pairs), &(off, len))| {
                let inc = d2.sqrt();
                ProfileEntry {
                    offset: off,
                    length: len,
                    increment: inc,
                    ratio: inc / m.value(len),
                    pairs,
                    exact: true,
                }
            })
            .collect();
        best = batch.iter().map(|e| e.ratio).fold(best, f64::max);
        entries.extend(batch);
        start = end;
    }
    for &(off, len) in &offsets[start..] {
        entries.push(ProfileEntry {
            offset: off,
            length: len,
            increment: osc,
            ratio: osc / m.value(len),
            pairs: pair_count(f, off),
            exact: false,
        });
    }
    Ok(SeminormProfile { entries })
}

/// Discrete Hölog (or general-modulus) seminorm: the exact maximum of
/// `|f(x) − f(y)| / m(|x − y|)` over grid pairs with `0 < |x − y| ≤ s_max`.
pub fn holog_seminorm(f: &SampledField, m: &Modulus) -> Result<SeminormReport> {
    holog_seminorm_with(Exec::default(), f, m)
}

pub fn holog_seminorm_with(exec: Exec, f: &SampledField, m: &Modulus) -> Result<SeminormReport> {
    let profile = seminorm_profile_with(exec, f, m)?;
    Ok(report_from_profile(f, &profile))
}

pub fn report_from_profile(f: &SampledField, profile: &SeminormProfile) -> SeminormReport {
    let pair_count = profile.entries.iter().map(|e| e.pairs).sum();
    let mut best: Option<usize> = None;
    for (i, e) in profile.entries.iter().enumerate() {
        if e.pairs == 0 || !e.exact {
            continue;
        }
        if best.is_none_or(|b| e.ratio > profile.entries[b].ratio) {
            best = Some(i);
        }
    }
    match best {
        Some(b) => {
            let e = profile.entries[b];
            SeminormReport {
                value: e.ratio,
                attaining_pair: first_pair_attaining(f, e.offset),
                pair_count,
            }
        }
        None => SeminormReport {
            value: 0.0,
            attaining_pair: (0, 0),
            pair_count,
        },
    }
}

/// Second-difference `L³` seminorm
/// `max_y ‖f(·+y) + f(·−y) − 2f(·)‖₃ / |y|^exponent` on a periodic grid.
///
/// The `L³` norm is volume-normalised, `(mean |·|³)^{1/3}`. The profile lists
/// the largest ratio for every distinct separation, smallest first.
pub fn besov3_seminorm(f: &SampledField, exponent: f64, s_max: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    besov3_seminorm_with(Exec::default(), f, exponent, s_max)
}

pub fn besov3_seminorm_with(exec: Exec, f: &SampledField, exponent: f64, s_max: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    f.require_periodic()?;
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::Domain(format!("exponent must lie in (0,1), got {exponent}")));
    }
    let offsets = half_offsets(&f.grid, s_max);
    if offsets.is_empty() {
        return Err(Error::Config("no admissible separations below s_max".into()));
    }
    let len = f.len();
    let ratios = par::map(exec, offsets.len(), |k| {
        let (off, l) = offsets[k];
        let neg = [-off[0], -off[1]];
        let mut acc = 0.0;
        for i in 0..len {
            let p = f.grid.shifted(i, off).unwrap();
            let q = f.grid.shifted(i, neg).unwrap();
            let d2: f64 = (0..f.components)
                .map(|c| (f.at(c, p) + f.at(c, q) - 2.0 * f.at(c, i)).powi(2))
                .sum();
            acc += d2.powf(1.5);
        }
        let norm = (acc / len as f64).cbrt();
        (l, norm / l.powf(exponent))
    });
    let mut profile: Vec<(f64, f64)> = Vec::new();
    for (l, r) in ratios {
        match profile.last_mut() {
            Some(last) if (last.0 - l).abs() <= 1e-12 * l => last.1 = last.1.max(r),
            _ => profile.push((l, r)),
        }
    }
    let value = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok((value, profile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn holog_unit_log_factor() {
        let m = Modulus::holog(1.0 / 3.0, 1.0).unwrap();
        let v = m.eval(E.powi(-1)).unwrap();
        assert!((v - E.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert!((v - 0.716531).abs() < 1e-6);
    }

    #[test]
    fn pure_holder_when_lambda_zero() {
        let m = Modulus::holog(0.5, 0.0).unwrap();
        assert_eq!(m.eval(0.25).unwrap(), 0.5);
    }

    #[test]
    fn holog_lambda_two_matches_closed_form() {
        // (log 1/s)^{-2} s^{1/3} at s = e^{-2}: 2^{-2} e^{-2/3}
        let m = Modulus::holog(1.0 / 3.0, 2.0).unwrap();
        let v = m.eval((-2.0f64).exp()).unwrap();
        assert!((v - 0.25 * (-2.0f64 / 3.0).exp()).abs() < 1e-15);
        assert!((v - 0.128354).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_separation_names_interval() {
        let m = Modulus::holog(0.3, 1.0).unwrap();
        let err = m.eval(0.7).unwrap_err().to_string();
        assert!(err.contains("(0, 0.5]"), "{err}");
        assert!(m.eval(0.0).is_err());
        assert!(Modulus::holog(0.3, 1.0).unwrap().with_s_max(1.0).is_err());
    }

    #[test]
    fn general_modulus_validation() {
        let ok = Omega::from_table(vec![(0.1, 0.5), (0.5, 1.0)]).unwrap();
        assert!(Modulus::general(0.2, ok, 0.5).is_ok());
        let decreasing = Omega::from_fn(|s| 1.0 - s);
        assert!(Modulus::general(0.2, decreasing, 0.5).is_err());
        let flat = Omega::from_fn(|_| 1.0);
        assert!(Modulus::general(0.2, flat, 0.5).is_err());
    }

    #[test]
    fn constant_field_has_zero_seminorm() {
        let g = Grid::periodic(1, 64).unwrap();
        let f = SampledField::from_fn(g, 1, |_, _| 3.0).unwrap();
        let r = holog_seminorm(&f, &Modulus::holog(0.3, 1.0).unwrap()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.pair_count > 0);
    }

    #[test]
    fn empty_pair_set_is_config_error() {
        let g = Grid::periodic(1, 8).unwrap();
        let f = SampledField::zeros(g, 1);
        let m = Modulus::holog(0.3, 1.0).unwrap().with_s_max(0.1).unwrap();
        assert!(matches!(holog_seminorm(&f, &m), Err(Error::Config(_))));
    }

    #[test]
    fn pair_runs_cover_every_node_once() {
        for g in [
            Grid::periodic(2, 7).unwrap(),
            Grid::boxed(&[0.0, 0.0], &[1.0, 1.0], 7).unwrap(),
        ] {
            for off in [[1, -2], [0, 3], [2, 2]] {
                let mut seen = vec![false; g.len()];
                for (s, t, l) in pair_runs(&g, off) {
                    for i in 0..l {
                        assert_eq!(g.shifted(s + i, off), Some(t + i));
                        assert!(!seen[s + i]);
                        seen[s + i] = true;
                    }
                }
                let expected = (0..g.len()).filter(|&i| g.shifted(i, off).is_some()).count();
                assert_eq!(seen.iter().filter(|&&b| b).count(), expected);
            }
        }
    }

    #[test]
    fn batched_paths_match_per_offset_scan() {
        let g = Grid::boxed(&[-1.5, -1.5], &[1.5, 1.5], 40).unwrap();
        let f = SampledField::from_fn(g.clone(), 2, |x, c| {
            (3.0 * x[0] + c as f64).sin() * (2.0 * x[1]).cos() + x[1] * x[1]
        })
        .unwrap();
        let mask: Vec<bool> = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                x[0].hypot(x[1]) <= 1.0 || (x[0] > 1.2 && x[1] < -0.5)
            })
            .collect();
        let gp = Grid::periodic(2, 24).unwrap();
        let fp = SampledField::from_fn(gp, 2, |x, c| (3.0 * x[0] + c as f64).sin() + (x[1] + x[0]).cos()).unwrap();
        for field in [fp, f.clone(), f.with_mask(mask).unwrap()] {
            let offs = half_offsets(&field.grid, 0.9);
            let fast = batch_sq_increments(Exec::Sequential, &field, &offs);
            for (o, got) in offs.iter().zip(fast) {
                assert_eq!(got, max_sq_increment(&field, o.0), "offset {:?}", o.0);
            }
        }
    }
}
