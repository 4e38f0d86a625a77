//! The cutoff functionals `J₂₁, J₂₂₁, J₂₂₂, J₃₁, J₃₂₁, J₃₂₂` on a fine
//! Cartesian grid, streamed in blocks of rows.
//!
//! At the coupling `ε = h^{2/(1+α)}` the resolution floor `Δx ≤ ε/8` needs
//! tens of thousands of points per axis, so no full field is ever stored.
//! Each block evaluates the sources on its rows plus a halo, mollifies once
//! (stage 1) and twice (stage 2), and returns partial sums that are added
//! in block order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::modulus::Modulus;
use crate::mollify::MollifierKernel;
use crate::par::{self, Exec};

use super::source::{disk_seminorm, ScalarSource, VectorSource};
use super::{collar_area, eta, eta_prime_sup, theta_grad, H0};

/// `ε = h^{2/(1+α)}`.
pub fn coupling_eps(h: f64, alpha: f64) -> f64 {
    h.powf(2.0 / (1.0 + alpha))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JOptions {
    /// Grid points per `ε` (at least 8).
    pub cells_per_eps: f64,
    pub half_width: f64,
    /// Points per axis of the sample used for `S_u`.
    pub sample_n: usize,
    pub block_rows: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for JOptions {
    fn default() -> Self {
        JOptions {
            cells_per_eps: 8.0,
            half_width: 1.5,
            sample_n: 1024,
            block_rows: 128,
            exec: Exec::default(),
        }
    }
}

/// Measured functionals and their envelopes at one `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JRecord {
    pub h: f64,
    pub eps: f64,
    pub dx: f64,
    pub n: usize,
    pub j21: f64,
    pub j221: f64,
    pub j222: f64,
    pub j31: f64,
    pub j321: f64,
    pub j322: f64,
    pub env_j21: f64,
    pub env_j221: f64,
    pub env_j222: f64,
    pub env_j31: f64,
    pub env_j321: f64,
    pub env_j322: f64,
    pub envelope_total: f64,
    /// `J₂₁ + J₂₂₁ − J₂₂₂`.
    pub j2: f64,
    /// `J₃₁ + J₃₂₁ + J₃₂₂`.
    pub j3: f64,
    pub seminorm: f64,
    pub u_sup: f64,
    pub p_sup: f64,
    pub k1: f64,
    pub eta_prime_sup: f64,
}

impl JRecord {
    pub fn measured(&self) -> [f64; 6] {
        [self.j21, self.j221, self.j222, self.j31, self.j321, self.j322]
    }

    pub fn envelopes(&self) -> [f64; 6] {
        [
            self.env_j21,
            self.env_j221,
            self.env_j222,
            self.env_j31,
            self.env_j321,
            self.env_j322,
        ]
    }

    pub const TERMS: [&'static str; 6] = ["J21", "J221", "J222", "J31", "J321", "J322"];
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    j21: f64,
    j221: f64,
    j222: f64,
    j31: f64,
    j32: f64,
    j322: f64,
    u_sup: f64,
    p_sup: f64,
}

/// Geometry and stencil of one sweep point.
struct Plan<'a> {
    h: f64,
    dx: f64,
    /// Coordinate of global node 0.
    x_first: f64,
    /// First stored global column and stored width.
    col_off: usize,
    width: usize,
    r: usize,
    taps: Vec<(i64, i64, f64, [f64; 2])>,
    u: &'a dyn VectorSource,
    p: &'a dyn ScalarSource,
}

impl Plan<'_> {
    fn coord(&self, i: usize) -> f64 {
        self.x_first + (i as f64 + 0.5) * self.dx
    }

    fn col_x(&self, c: usize) -> f64 {
        self.coord(self.col_off + c)
    }

    /// Stored columns with `|x₁| ≤ half` (padded by one cell), clamped so
    /// every stencil shift stays in storage.
    fn cols(&self, lo: f64, hi: f64) -> (usize, usize) {
        let x0 = self.col_x(0);
        let c0 = ((lo - x0) / self.dx).floor() as i64 - 1;
        let c1 = ((hi - x0) / self.dx).ceil() as i64 + 2;
        let min = self.r as i64;
        let max = (self.width - self.r) as i64;
        let (c0, c1) = (c0.clamp(min, max), c1.clamp(min, max));
        (c0 as usize, c1.max(c0) as usize)
    }

    fn chord(&self, y: f64, rho: f64) -> Option<(usize, usize)> {
        if y.abs() >= rho {
            return None;
        }
        let c = (rho * rho - y * y).sqrt();
        Some(self.cols(-c, c))
    }

    /// Columns of row `y` meeting the annulus `r_in ≤ r ≤ r_out`, as
    /// disjoint ranges.
    fn band(&self, y: f64, r_in: f64, r_out: f64) -> Vec<(usize, usize)> {
        let Some(outer) = self.chord(y, r_out) else {
            return vec![];
        };
        match self.chord(y, r_in.max(0.0)) {
            None => vec![outer],
            Some(inner) => {
                let c = (r_in * r_in - y * y).sqrt();
                let x0 = self.col_x(0);
                // strictly interior columns of the inner chord are skipped
                let a = ((-c - x0) / self.dx).ceil() as i64 + 1;
                let b = ((c - x0) / self.dx).floor() as i64;
                let (a, b) = (a.max(outer.0 as i64) as usize, (b.max(a - 1) as usize).min(outer.1));
                let _ = inner;
                if a >= b {
                    vec![outer]
                } else {
                    vec![(outer.0, a), (b, outer.1)]
                }
            }
        }
    }
}

/// Row-major block storage of several same-shaped arrays.
struct Rows {
    width: usize,
    data: Vec<Vec<f64>>,
}

impl Rows {
    fn new(arrays: usize, rows: usize, width: usize) -> Self {
        Rows {
            width,
            data: (0..arrays).map(|_| vec![0.0; rows * width]).collect(),
        }
    }

    fn row(&self, a: usize, r: usize) -> &[f64] {
        &self.data[a][r * self.width..(r + 1) * self.width]
    }

    fn row_mut(&mut self, a: usize, r: usize) -> &mut [f64] {
        let w = self.width;
        &mut self.data[a][r * w..(r + 1) * w]
    }
}

// stage-0 arrays
const U0: usize = 0;
const U1: usize = 1;
const TH: usize = 2;
const V0: usize = 3;
const V1: usize = 4;
const S: usize = 5;
// stage-1 arrays
const VE0: usize = 0;
const VE1: usize = 1;
const SE: usize = 2;
const THE: usize = 3;

/// `out[c] += w · src[c − b]` over `range`.
#[inline]
fn axpy(out: &mut [f64], w: f64, src: &[f64], b: i64, (c0, c1): (usize, usize)) {
    let s0 = (c0 as i64 - b) as usize;
    let src = &src[s0..s0 + (c1 - c0)];
    for (o, s) in out[c0..c1].iter_mut().zip(src) {
        *o += w * s;
    }
}

fn stage0_row(plan: &Plan, y: f64, st: &mut Rows, r: usize, sums: &mut Sums) {
    let Some((c0, c1)) = plan.chord(y, 1.0) else {
        return;
    };
    let x_start = plan.col_x(c0);
    let (mut a, mut b) = (vec![0.0; c1 - c0], vec![0.0; c1 - c0]);
    plan.u.eval_row(y, x_start, plan.dx, &mut a, &mut b);
    let h = plan.h;
    for k in 0..c1 - c0 {
        let c = c0 + k;
        let x = [y, plan.col_x(c)];
        let rad = x[0].hypot(x[1]);
        if rad > 1.0 {
            continue;
        }
        let th = eta((1.0 - rad) / h);
        let g = theta_grad(x, h);
        sums.u_sup = sums.u_sup.max(a[k].hypot(b[k]));
        st.row_mut(U0, r)[c] = a[k];
        st.row_mut(U1, r)[c] = b[k];
        st.row_mut(TH, r)[c] = th;
        st.row_mut(V0, r)[c] = th * a[k];
        st.row_mut(V1, r)[c] = th * b[k];
        st.row_mut(S, r)[c] = a[k] * g[0] + b[k] * g[1];
    }
}

/// Partial sums of one block of output rows `[ia, ib)`.
fn run_block(plan: &Plan, eps: f64, ia: usize, ib: usize) -> Sums {
    let r = plan.r;
    let w = plan.width;
    let h = plan.h;
    let dx = plan.dx;
    let mut sums = Sums::default();
    // stage 0 rows: [ia − 2r, ib + 2r)
    let base0 = ia as i64 - 2 * r as i64;
    let n0 = ib - ia + 4 * r;
    let mut st0 = Rows::new(6, n0, w);
    let n_global = plan.col_off * 2 + w;
    for k in 0..n0 {
        let gi = base0 + k as i64;
        if gi < 0 || gi >= n_global as i64 {
            continue;
        }
        stage0_row(plan, plan.coord(gi as usize), &mut st0, k, &mut sums);
    }
    let rho1 = 1.0 - h / 2.0 + eps + 2.0 * dx;
    let band1 = (1.0 - h - 3.0 * eps - 2.0 * dx, 1.0);
    let band2 = (1.0 - h - 2.0 * eps - 2.0 * dx, 1.0);

    // stage 1 rows: [ia − r, ib + r)
    let n1 = ib - ia + 2 * r;
    let mut st1 = Rows::new(4, n1, w);
    let mut scratch: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0; w]).collect();
    for k in 0..n1 {
        let l0 = k + r; // same global row in stage-0 storage
        let gi = base0 + l0 as i64;
        if gi < 0 {
            continue;
        }
        let y = plan.coord(gi as usize);
        let accumulate = (ia as i64..ib as i64).contains(&gi);
        if let Some(range) = plan.chord(y, rho1) {
            for s in scratch.iter_mut() {
                s[range.0..range.1].iter_mut().for_each(|v| *v = 0.0);
            }
            let [ve0, ve1, ue0, ue1, g00, g01, g10, g11, c_rest @ ..] = &mut scratch[..] else {
                unreachable!()
            };
            let (cc, _) = c_rest.split_at_mut(2);
            let (c00, c01) = cc.split_at_mut(1);
            let (c00, c01) = (&mut c00[0], &mut c01[0]);
            let mut c10 = vec![0.0; w];
            let mut c11 = vec![0.0; w];
            let (c0, c1) = range;
            let cu0 = st0.row(U0, l0);
            let cu1 = st0.row(U1, l0);
            let cv0 = st0.row(V0, l0);
            let cv1 = st0.row(V1, l0);
            for &(a, b, wt, g) in &plan.taps {
                let src = (l0 as i64 - a) as usize;
                let (su0, su1) = (st0.row(U0, src), st0.row(U1, src));
                let (sv0, sv1) = (st0.row(V0, src), st0.row(V1, src));
                axpy(ve0, wt, sv0, b, range);
                axpy(ve1, wt, sv1, b, range);
                if !accumulate {
                    continue;
                }
                axpy(ue0, wt, su0, b, range);
                axpy(ue1, wt, su1, b, range);
                axpy(g00, g[0], sv0, b, range);
                axpy(g01, g[0], sv1, b, range);
                axpy(g10, g[1], sv0, b, range);
                axpy(g11, g[1], sv1, b, range);
                let s0 = (c0 as i64 - b) as usize;
                let len = c1 - c0;
                let (su0, su1) = (&su0[s0..s0 + len], &su1[s0..s0 + len]);
                let (sv0, sv1) = (&sv0[s0..s0 + len], &sv1[s0..s0 + len]);
                let (xu0, xu1) = (&cu0[c0..c1], &cu1[c0..c1]);
                let (xv0, xv1) = (&cv0[c0..c1], &cv1[c0..c1]);
                let (o00, o01) = (&mut c00[c0..c1], &mut c01[c0..c1]);
                let (o10, o11) = (&mut c10[c0..c1], &mut c11[c0..c1]);
                for j in 0..len {
                    let du0 = wt * (su0[j] - xu0[j]);
                    let du1 = wt * (su1[j] - xu1[j]);
                    let dv0 = sv0[j] - xv0[j];
                    let dv1 = sv1[j] - xv1[j];
                    o00[j] += du0 * dv0;
                    o01[j] += du0 * dv1;
                    o10[j] += du1 * dv0;
                    o11[j] += du1 * dv1;
                }
            }
            st1.row_mut(VE0, k)[c0..c1].copy_from_slice(&ve0[c0..c1]);
            st1.row_mut(VE1, k)[c0..c1].copy_from_slice(&ve1[c0..c1]);
            if accumulate {
                let (mut a221, mut a222) = (0.0, 0.0);
                for c in c0..c1 {
                    // C_kl G_kl with G_kl = ∂_k v^ε_l
                    a221 += c00[c] * g00[c] + c01[c] * g01[c] + c10[c] * g10[c] + c11[c] * g11[c];
                    let d = [cu0[c] - ue0[c], cu1[c] - ue1[c]];
                    let e = [cv0[c] - ve0[c], cv1[c] - ve1[c]];
                    a222 += d[0] * e[0] * g00[c] + d[0] * e[1] * g01[c] + d[1] * e[0] * g10[c] + d[1] * e[1] * g11[c];
                }
                sums.j221 += a221;
                sums.j222 += a222;
            }
        }
        for range in plan.band(y, band1.0, band1.1) {
            let mut se = vec![0.0; w];
            let mut the = vec![0.0; w];
            for &(a, b, wt, _) in &plan.taps {
                let src = (l0 as i64 - a) as usize;
                axpy(&mut se, wt, st0.row(S, src), b, range);
                axpy(&mut the, wt, st0.row(TH, src), b, range);
            }
            st1.row_mut(SE, k)[range.0..range.1].copy_from_slice(&se[range.0..range.1]);
            st1.row_mut(THE, k)[range.0..range.1].copy_from_slice(&the[range.0..range.1]);
        }
    }

    // stage 2 rows: [ia, ib)
    let mut vee0 = vec![0.0; w];
    let mut vee1 = vec![0.0; w];
    let mut see = vec![0.0; w];
    let mut thee = vec![0.0; w];
    for gi in ia..ib {
        let l1 = gi + r - ia;
        let l0 = gi + 2 * r - ia;
        let y = plan.coord(gi);
        for range in plan.band(y, band2.0, band2.1) {
            for v in [&mut vee0, &mut vee1, &mut see, &mut thee] {
                v[range.0..range.1].iter_mut().for_each(|x| *x = 0.0);
            }
            for &(a, b, wt, _) in &plan.taps {
                let src = (l1 as i64 - a) as usize;
                axpy(&mut vee0, wt, st1.row(VE0, src), b, range);
                axpy(&mut vee1, wt, st1.row(VE1, src), b, range);
                axpy(&mut see, wt, st1.row(SE, src), b, range);
                axpy(&mut thee, wt, st1.row(THE, src), b, range);
            }
            let (u0, u1) = (st0.row(U0, l0), st0.row(U1, l0));
            let (th, s) = (st0.row(TH, l0), st0.row(S, l0));
            for c in range.0..range.1 {
                let x = [y, plan.col_x(c)];
                let rad = x[0].hypot(x[1]);
                if rad > 1.0 || (th[c] == 0.0 && rad <= 1.0 - h) {
                    continue;
                }
                let p = plan.p.eval(x);
                sums.p_sup = sums.p_sup.max(p.abs());
                let g = theta_grad(x, h);
                sums.j21 += s[c] * (u0[c] * vee0[c] + u1[c] * vee1[c]);
                sums.j31 += p * th[c] * see[c];
                sums.j32 += p * (g[0] * vee0[c] + g[1] * vee1[c]);
                sums.j322 += p * s[c] * thee[c];
            }
        }
    }
    sums
}

/// Runs the functionals for every `h` with `ε = h^{2/(1+α)}`.
pub fn j_sweep(
    u: &dyn VectorSource,
    p: &dyn ScalarSource,
    m: &Modulus,
    hs: &[f64],
    opts: &JOptions,
) -> Result<Vec<JRecord>> {
    if hs.is_empty() {
        return Err(Error::Config("j sweep needs at least one h".into()));
    }
    if opts.cells_per_eps < 8.0 {
        return Err(Error::Resolution(format!(
            "the grid must resolve eps with at least 8 cells, got {}",
            opts.cells_per_eps
        )));
    }
    let alpha = m.alpha();
    let mut eps_list = Vec::with_capacity(hs.len());
    for &h in hs {
        if !(h > 0.0 && h < H0.min(1.0)) {
            return Err(Error::Domain(format!("h must lie in (0, {H0}), got {h}")));
        }
        let eps = coupling_eps(h, alpha);
        if !(eps < h / 4.0) {
            return Err(Error::Precondition(format!(
                "coupling eps = h^(2/(1+alpha)) = {eps} is not below h/4 = {} at h = {h}",
                h / 4.0
            )));
        }
        if opts.half_width < 1.0 + 4.0 * eps {
            return Err(Error::Config(format!(
                "half_width {} leaves no halo around the disk",
                opts.half_width
            )));
        }
        eps_list.push(eps);
    }
    let s_cap = hs
        .iter()
        .zip(&eps_list)
        .map(|(h, e)| h.max(2.0 * e))
        .fold(0.0, f64::max);
    let sn = disk_seminorm(opts.exec, u, m, opts.sample_n, s_cap, opts.half_width)?;
    let ep = eta_prime_sup();
    let mut out = Vec::with_capacity(hs.len());
    for (&h, &eps) in hs.iter().zip(&eps_list) {
        let hw = opts.half_width;
        let n = (2.0 * hw * opts.cells_per_eps / eps).ceil() as usize;
        let grid = Grid::boxed(&[-hw, -hw], &[hw, hw], n)?;
        let dx = grid.spacing();
        let kernel = MollifierKernel::with_floor(eps, &grid, opts.cells_per_eps.min(8.0))?;
        let r = kernel.radius_cells;
        let margin = ((hw - 1.0) / dx).floor() as usize;
        let col_off = margin.saturating_sub(3 * r + 4);
        let plan = Plan {
            h,
            dx,
            x_first: -hw,
            col_off,
            width: n - 2 * col_off,
            r,
            taps: kernel
                .offsets
                .iter()
                .zip(&kernel.weights)
                .zip(&kernel.grad_weights)
                .map(|((o, w), g)| (o[0], o[1], *w, *g))
                .collect(),
            u,
            p,
        };
        // output rows meeting the closed disk
        let first = ((hw - 1.0) / dx).floor() as usize;
        let last = n - first;
        let block = opts.block_rows.max(1);
        let starts: Vec<usize> = (first..last).step_by(block).collect();
        let parts = par::map(opts.exec, starts.len(), |k| {
            let ia = starts[k];
            run_block(&plan, eps, ia, (ia + block).min(last))
        });
        let mut s = Sums::default();
        for q in parts {
            s.j21 += q.j21;
            s.j221 += q.j221;
            s.j222 += q.j222;
            s.j31 += q.j31;
            s.j32 += q.j32;
            s.j322 += q.j322;
            s.u_sup = s.u_sup.max(q.u_sup);
            s.p_sup = s.p_sup.max(q.p_sup);
        }
        let da = dx * dx;
        let (j21, j221, j222) = (s.j21 * da, s.j221 * da, s.j222 * da);
        let (j31, j32, j322) = (s.j31 * da, s.j32 * da, s.j322 * da);
        let p_sup = p.sup_bound().unwrap_or(s.p_sup).max(s.p_sup);
        let sw = sn.value;
        let a = m.value(eps) * sw;
        let b = ep * eps / h * s.u_sup;
        let lemma = ep * sw * m.value(h) / h * collar_area(h);
        let conv = std::f64::consts::PI * a * (a + b) * (a + b) * kernel.k1 / eps;
        let env = [
            lemma * s.u_sup * s.u_sup,
            conv,
            conv,
            p_sup * lemma,
            p_sup * sw * m.value(2.0 * eps) * std::f64::consts::TAU,
            p_sup * lemma,
        ];
        out.push(JRecord {
            h,
            eps,
            dx,
            n,
            j21,
            j221,
            j222,
            j31,
            j321: j32 - j322,
            j322,
            env_j21: env[0],
            env_j221: env[1],
            env_j222: env[2],
            env_j31: env[3],
            env_j321: env[4],
            env_j322: env[5],
            envelope_total: env.iter().sum(),
            j2: j21 + j221 - j222,
            j3: j31 + j32,
            seminorm: sw,
            u_sup: s.u_sup,
            p_sup,
            k1: kernel.k1,
            eta_prime_sup: ep,
        });
    }
    Ok(out)
}
