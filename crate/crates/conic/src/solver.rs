//! Primal-dual interior-point solver on the homogeneous self-dual embedding.
//!
//! The program `maximize g'x s.t. A_j x + b_j in K_j` is brought to the
//! internal form
//!
//! ```text
//!   minimize c'x   s.t.  G x + s = h,  s in K,      c = -g, G = -A, h = b
//! ```
//!
//! and embedded as
//!
//! ```text
//!   G'z + c tau            = 0
//!   G x  + s    - h tau    = 0
//!   c'x  + h'z  + kappa    = 0
//!   s in K, z in K, tau >= 0, kappa >= 0.
//! ```
//!
//! A Mehrotra predictor-corrector iteration with Nesterov-Todd scaling drives
//! the relaxed central path. Each step solves the reduced normal equations
//! `G' (W'W)^-1 G` by dense Cholesky; rotated cones are mapped onto standard
//! second-order cones by an orthogonal change of rows, so the kernel only
//! handles the nonnegative orthant and second-order cones.
//!
//! tau > 0 at convergence certifies optimality; kappa > 0 with tau -> 0
//! yields an infeasibility certificate ray.

use std::time::Instant;

use crate::program::{Cone, ConicProgram};

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Relative primal/dual feasibility tolerance.
    pub tol_feas: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap: 1e-8,
            tol_feas: 1e-8,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// `z` holds a certificate ray: h'z = -1, G'z ~ 0, z in K.
    PrimalInfeasible,
    /// `x` holds a certificate ray: g'x = +1 (unbounded ascent), Gx + s ~ 0.
    DualInfeasible,
    NumericalLimit,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal point (or unboundedness certificate), length `num_vars`.
    pub x: Vec<f64>,
    /// Dual point (or infeasibility certificate), one entry per cone row.
    pub z: Vec<f64>,
    /// Objective value in the program's maximize convention.
    pub objective: f64,
    /// Relative primal residual at the returned point.
    pub primal_residual: f64,
    /// Relative dual residual at the returned point.
    pub dual_residual: f64,
    /// Relative duality gap at the returned point.
    pub duality_gap: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
}

// ---------------------------------------------------------------------------
// internal standard form
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum SegKind {
    NonNeg,
    Soc,
}

struct Seg {
    kind: SegKind,
    start: usize,
    dim: usize,
    /// Sorted union of variable indices touched by the segment's rows.
    support: Vec<u32>,
}

struct Standard {
    n: usize,
    m: usize,
    c: Vec<f64>,
    /// Sparse rows of G (= -A after cone-row rotation).
    g_rows: Vec<Vec<(u32, f64)>>,
    h: Vec<f64>,
    segs: Vec<Seg>,
    norm_h: f64,
    norm_c: f64,
    norm_g: f64,
    barrier_degree: f64,
}

const SQRT1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn standardize(p: &ConicProgram) -> Standard {
    let n = p.num_vars;
    let c: Vec<f64> = p.objective.iter().map(|&g| -g).collect();
    let mut g_rows: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    let mut segs: Vec<Seg> = Vec::new();

    let push_row = |g_rows: &mut Vec<Vec<(u32, f64)>>, h: &mut Vec<f64>, e: &crate::LinExpr| {
        let row: Vec<(u32, f64)> = e.terms.iter().map(|&(i, v)| (i as u32, -v)).collect();
        g_rows.push(row);
        h.push(e.constant);
    };

    for b in &p.blocks {
        let start = g_rows.len();
        match b.cone {
            Cone::NonNeg(d) => {
                for r in &b.rows {
                    push_row(&mut g_rows, &mut h, r);
                }
                segs.push(Seg {
                    kind: SegKind::NonNeg,
                    start,
                    dim: d,
                    support: Vec::new(),
                });
            }
            Cone::SecondOrder(d) => {
                for r in &b.rows {
                    push_row(&mut g_rows, &mut h, r);
                }
                segs.push(Seg {
                    kind: SegKind::Soc,
                    start,
                    dim: d,
                    support: Vec::new(),
                });
            }
            Cone::RotatedSecondOrder(d) => {
                // (u, v, w) in Qr  <=>  ((u+v)/sqrt2, (u-v)/sqrt2, w) in Q.
                let mut r0 = b.rows[0].clone();
                let mut r1 = b.rows[0].clone();
                r0 += b.rows[1].clone();
                r1 -= b.rows[1].clone();
                r0 = r0.scaled(SQRT1_2);
                r1 = r1.scaled(SQRT1_2);
                r0.compress();
                r1.compress();
                push_row(&mut g_rows, &mut h, &r0);
                push_row(&mut g_rows, &mut h, &r1);
                for r in &b.rows[2..] {
                    push_row(&mut g_rows, &mut h, r);
                }
                segs.push(Seg {
                    kind: SegKind::Soc,
                    start,
                    dim: d,
                    support: Vec::new(),
                });
            }
        }
    }

    for seg in &mut segs {
        let mut sup: Vec<u32> = g_rows[seg.start..seg.start + seg.dim]
            .iter()
            .flat_map(|r| r.iter().map(|&(i, _)| i))
            .collect();
        sup.sort_unstable();
        sup.dedup();
        seg.support = sup;
    }

    let norm_h = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_c = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_g = g_rows
        .iter()
        .flat_map(|r| r.iter().map(|&(_, v)| v * v))
        .sum::<f64>()
        .sqrt();
    let barrier_degree = segs
        .iter()
        .map(|s| match s.kind {
            SegKind::NonNeg => s.dim as f64,
            SegKind::Soc => 1.0,
        })
        .sum();

    Standard {
        n,
        m: h.len(),
        c,
        g_rows,
        h,
        segs,
        norm_h,
        norm_c,
        norm_g,
        barrier_degree,
    }
}

fn matvec(st: &Standard, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(&st.g_rows) {
        let mut acc = 0.0;
        for &(i, v) in row {
            acc += v * x[i as usize];
        }
        *o = acc;
    }
}

fn rmatvec(st: &Standard, y: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (r, row) in st.g_rows.iter().enumerate() {
        let yr = y[r];
        if yr != 0.0 {
            for &(i, v) in row {
                out[i as usize] += v * yr;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scalings
// ---------------------------------------------------------------------------

enum SegScaling {
    NonNeg { w: Vec<f64>, lambda: Vec<f64> },
    Soc { eta: f64, wbar: Vec<f64>, lambda: Vec<f64> },
}

fn compute_scalings(st: &Standard, s: &[f64], z: &[f64]) -> Option<Vec<SegScaling>> {
    let mut out = Vec::with_capacity(st.segs.len());
    for seg in &st.segs {
        let sv = &s[seg.start..seg.start + seg.dim];
        let zv = &z[seg.start..seg.start + seg.dim];
        match seg.kind {
            SegKind::NonNeg => {
                let mut w = Vec::with_capacity(seg.dim);
                let mut lambda = Vec::with_capacity(seg.dim);
                for (&si, &zi) in sv.iter().zip(zv) {
                    if si <= 0.0 || zi <= 0.0 {
                        return None;
                    }
                    w.push((si / zi).sqrt());
                    lambda.push((si * zi).sqrt());
                }
                out.push(SegScaling::NonNeg { w, lambda });
            }
            SegKind::Soc => {
                let ds = jdet(sv);
                let dz = jdet(zv);
                if ds <= 0.0 || dz <= 0.0 || sv[0] <= 0.0 || zv[0] <= 0.0 {
                    return None;
                }
                let rs = ds.sqrt();
                let rz = dz.sqrt();
                let sbar: Vec<f64> = sv.iter().map(|&v| v / rs).collect();
                let zbar: Vec<f64> = zv.iter().map(|&v| v / rz).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                if !gamma.is_finite() || gamma <= 0.0 {
                    return None;
                }
                // wbar = (sbar + J zbar) / (2 gamma), normalized so wbar'J wbar = 1.
                let mut wbar = Vec::with_capacity(seg.dim);
                wbar.push((sbar[0] + zbar[0]) / (2.0 * gamma));
                for i in 1..seg.dim {
                    wbar.push((sbar[i] - zbar[i]) / (2.0 * gamma));
                }
                let eta = (rs / rz).sqrt();
                // lambda = W z  (also = W^-1 s).
                let lambda = soc_w_apply(eta, &wbar, zv);
                out.push(SegScaling::Soc { eta, wbar, lambda });
            }
        }
    }
    Some(out)
}

fn jdet(v: &[f64]) -> f64 {
    v[0] * v[0] - v[1..].iter().map(|&a| a * a).sum::<f64>()
}

fn soc_w_apply(eta: f64, wbar: &[f64], v: &[f64]) -> Vec<f64> {
    let d1 = dot(&wbar[1..], &v[1..]);
    let mut out = Vec::with_capacity(v.len());
    out.push(eta * (wbar[0] * v[0] + d1));
    let coef = v[0] + d1 / (1.0 + wbar[0]);
    for i in 1..v.len() {
        out.push(eta * (v[i] + coef * wbar[i]));
    }
    out
}

fn soc_winv_apply(eta: f64, wbar: &[f64], v: &[f64]) -> Vec<f64> {
    let d1 = dot(&wbar[1..], &v[1..]);
    let mut out = Vec::with_capacity(v.len());
    out.push((wbar[0] * v[0] - d1) / eta);
    let coef = -v[0] + d1 / (1.0 + wbar[0]);
    for i in 1..v.len() {
        out.push((v[i] + coef * wbar[i]) / eta);
    }
    out
}

/// (W'W)^-1 v = eta^-2 (2 (J wbar)(J wbar)' - J) v  for the SOC.
fn soc_w2inv_apply(eta: f64, wbar: &[f64], v: &[f64], out: &mut [f64]) {
    let jw_dot_v = wbar[0] * v[0] - dot(&wbar[1..], &v[1..]);
    let e2 = eta * eta;
    out[0] = (2.0 * jw_dot_v * wbar[0] - v[0]) / e2;
    for i in 1..v.len() {
        out[i] = (2.0 * jw_dot_v * (-wbar[i]) + v[i]) / e2;
    }
}

fn w_apply_all(st: &Standard, sc: &[SegScaling], v: &[f64], out: &mut [f64]) {
    for (seg, s) in st.segs.iter().zip(sc) {
        let vv = &v[seg.start..seg.start + seg.dim];
        let oo = &mut out[seg.start..seg.start + seg.dim];
        match s {
            SegScaling::NonNeg { w, .. } => {
                for i in 0..seg.dim {
                    oo[i] = w[i] * vv[i];
                }
            }
            SegScaling::Soc { eta, wbar, .. } => {
                oo.copy_from_slice(&soc_w_apply(*eta, wbar, vv));
            }
        }
    }
}

fn winv_apply_all(st: &Standard, sc: &[SegScaling], v: &[f64], out: &mut [f64]) {
    for (seg, s) in st.segs.iter().zip(sc) {
        let vv = &v[seg.start..seg.start + seg.dim];
        let oo = &mut out[seg.start..seg.start + seg.dim];
        match s {
            SegScaling::NonNeg { w, .. } => {
                for i in 0..seg.dim {
                    oo[i] = vv[i] / w[i];
                }
            }
            SegScaling::Soc { eta, wbar, .. } => {
                oo.copy_from_slice(&soc_winv_apply(*eta, wbar, vv));
            }
        }
    }
}

fn w2inv_apply_all(st: &Standard, sc: &[SegScaling], v: &[f64], out: &mut [f64]) {
    for (seg, s) in st.segs.iter().zip(sc) {
        let vv = &v[seg.start..seg.start + seg.dim];
        let oo = &mut out[seg.start..seg.start + seg.dim];
        match s {
            SegScaling::NonNeg { w, .. } => {
                for i in 0..seg.dim {
                    oo[i] = vv[i] / (w[i] * w[i]);
                }
            }
            SegScaling::Soc { eta, wbar, .. } => {
                soc_w2inv_apply(*eta, wbar, vv, oo);
            }
        }
    }
}

/// lambda o lambda per segment.
fn lambda_sq(st: &Standard, sc: &[SegScaling], out: &mut [f64]) {
    for (seg, s) in st.segs.iter().zip(sc) {
        let oo = &mut out[seg.start..seg.start + seg.dim];
        match s {
            SegScaling::NonNeg { lambda, .. } => {
                for i in 0..seg.dim {
                    oo[i] = lambda[i] * lambda[i];
                }
            }
            SegScaling::Soc { lambda, .. } => {
                oo[0] = dot(lambda, lambda);
                for i in 1..seg.dim {
                    oo[i] = 2.0 * lambda[0] * lambda[i];
                }
            }
        }
    }
}

/// Jordan product u o v per segment, accumulated into `out`.
fn jordan_prod(st: &Standard, u: &[f64], v: &[f64], out: &mut [f64]) {
    for seg in &st.segs {
        let uu = &u[seg.start..seg.start + seg.dim];
        let vv = &v[seg.start..seg.start + seg.dim];
        let oo = &mut out[seg.start..seg.start + seg.dim];
        match seg.kind {
            SegKind::NonNeg => {
                for i in 0..seg.dim {
                    oo[i] = uu[i] * vv[i];
                }
            }
            SegKind::Soc => {
                oo[0] = dot(uu, vv);
                for i in 1..seg.dim {
                    oo[i] = uu[0] * vv[i] + vv[0] * uu[i];
                }
            }
        }
    }
}

/// Solves lambda o y = w per segment.
fn jordan_div_lambda(st: &Standard, sc: &[SegScaling], w: &[f64], out: &mut [f64]) {
    for (seg, s) in st.segs.iter().zip(sc) {
        let ww = &w[seg.start..seg.start + seg.dim];
        let oo = &mut out[seg.start..seg.start + seg.dim];
        match s {
            SegScaling::NonNeg { lambda, .. } => {
                for i in 0..seg.dim {
                    oo[i] = ww[i] / lambda[i];
                }
            }
            SegScaling::Soc { lambda, .. } => {
                let l0 = lambda[0];
                let l1w1 = dot(&lambda[1..], &ww[1..]);
                let det = jdet(lambda);
                let y0 = (l0 * ww[0] - l1w1) / det;
                oo[0] = y0;
                for i in 1..seg.dim {
                    oo[i] = (ww[i] - y0 * lambda[i]) / l0;
                }
            }
        }
    }
}

/// Largest alpha in [0, cap] with v + alpha dv remaining in the cone.
fn step_to_boundary(st: &Standard, v: &[f64], dv: &[f64], cap: f64) -> f64 {
    let mut alpha = cap;
    for seg in &st.segs {
        let vv = &v[seg.start..seg.start + seg.dim];
        let dd = &dv[seg.start..seg.start + seg.dim];
        match seg.kind {
            SegKind::NonNeg => {
                for i in 0..seg.dim {
                    if dd[i] < 0.0 {
                        alpha = alpha.min(-vv[i] / dd[i]);
                    }
                }
            }
            SegKind::Soc => {
                // roots of (v0+a d0)^2 - |v1 + a d1|^2 = 0
                let a = dd[0] * dd[0] - dot(&dd[1..], &dd[1..]);
                let b = vv[0] * dd[0] - dot(&vv[1..], &dd[1..]);
                let c = jdet(vv);
                let disc = b * b - a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    for r in quad_roots(a, b, c, sq) {
                        if r > 0.0 && vv[0] + r * dd[0] >= -1e-14 * (vv[0].abs() + 1.0) {
                            alpha = alpha.min(r);
                        }
                    }
                }
                if dd[0] < 0.0 {
                    alpha = alpha.min(-vv[0] / dd[0]);
                }
            }
        }
    }
    alpha.max(0.0)
}

/// Real roots of a x^2 + 2 b x + c = 0 given sqrt of the discriminant.
fn quad_roots(a: f64, b: f64, c: f64, sq: f64) -> [f64; 2] {
    if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            return [f64::INFINITY, f64::INFINITY];
        }
        let r = -c / (2.0 * b);
        return [r, r];
    }
    // stable form avoiding cancellation
    let q = -(b + b.signum() * sq);
    let r1 = q / a;
    let r2 = if q.abs() < 1e-300 { r1 } else { c / q };
    [r1, r2]
}

fn margin(st: &Standard, v: &[f64]) -> f64 {
    let mut mrg = f64::INFINITY;
    for seg in &st.segs {
        let vv = &v[seg.start..seg.start + seg.dim];
        let m = match seg.kind {
            SegKind::NonNeg => vv.iter().cloned().fold(f64::INFINITY, f64::min),
            SegKind::Soc => vv[0] - dot(&vv[1..], &vv[1..]).sqrt(),
        };
        mrg = mrg.min(m);
    }
    mrg
}

fn add_identity(st: &Standard, v: &mut [f64], a: f64) {
    for seg in &st.segs {
        match seg.kind {
            SegKind::NonNeg => {
                for i in 0..seg.dim {
                    v[seg.start + i] += a;
                }
            }
            SegKind::Soc => v[seg.start] += a,
        }
    }
}

// ---------------------------------------------------------------------------
// dense Cholesky kernel
// ---------------------------------------------------------------------------

struct DenseChol {
    n: usize,
    /// Row-major lower-triangular factor (full square storage).
    l: Vec<f64>,
}

impl DenseChol {
    /// Factors the symmetric matrix stored row-major in `a` (lower part used).
    fn factor(n: usize, a: &[f64]) -> Option<DenseChol> {
        let mut l = a.to_vec();
        for j in 0..n {
            let mut d = l[j * n + j];
            {
                let row_j = &l[j * n..j * n + j];
                d -= dot(row_j, row_j);
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            let inv = 1.0 / d;
            let (head, tail) = l.split_at_mut((j + 1) * n);
            let row_j = &head[j * n..j * n + j];
            for i in (j + 1)..n {
                let off = (i - j - 1) * n;
                let row_i = &mut tail[off..off + j + 1];
                let s = dot(&row_i[..j], row_j);
                row_i[j] = (row_i[j] - s) * inv;
            }
        }
        Some(DenseChol { n, l })
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = dot(row, &b[..i]);
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Assembles M = G' (W'W)^-1 G + reg I using the per-cone closed forms.
fn assemble_normal_matrix(st: &Standard, sc: &[SegScaling], reg: f64, m: &mut [f64]) {
    let n = st.n;
    m.fill(0.0);

    let rank1 = |m: &mut [f64], idx: &[(u32, f64)], coef: f64| {
        for (p, &(i, vi)) in idx.iter().enumerate() {
            let mi = i as usize * n;
            let cvi = coef * vi;
            for &(j, vj) in &idx[..=p] {
                m[mi + j as usize] += cvi * vj;
            }
        }
    };

    let mut u_buf: Vec<(u32, f64)> = Vec::new();
    for (seg, s) in st.segs.iter().zip(sc) {
        match s {
            SegScaling::NonNeg { w, .. } => {
                for i in 0..seg.dim {
                    let row = &st.g_rows[seg.start + i];
                    let d = 1.0 / (w[i] * w[i]);
                    rank1(m, row, d);
                }
            }
            SegScaling::Soc { eta, wbar, .. } => {
                let e2inv = 1.0 / (eta * eta);
                // - G' J G part: row 0 positive weight -1 flipped below
                for i in 0..seg.dim {
                    let row = &st.g_rows[seg.start + i];
                    let sign = if i == 0 { -1.0 } else { 1.0 };
                    rank1(m, row, sign * e2inv);
                }
                // + 2 u u' with u = G' (J wbar)
                u_buf.clear();
                for &vi in &seg.support {
                    u_buf.push((vi, 0.0));
                }
                for i in 0..seg.dim {
                    let jw = if i == 0 { wbar[0] } else { -wbar[i] };
                    for &(vi, val) in &st.g_rows[seg.start + i] {
                        let pos = seg.support.binary_search(&vi).unwrap();
                        u_buf[pos].1 += jw * val;
                    }
                }
                rank1(m, &u_buf, 2.0 * e2inv);
            }
        }
    }
    // mirror lower triangle to the upper half and regularize
    for i in 0..n {
        m[i * n + i] += reg;
        for j in 0..i {
            m[j * n + i] = m[i * n + j];
        }
    }
}

// ---------------------------------------------------------------------------
// main loop
// ---------------------------------------------------------------------------

struct KktSolver<'a> {
    st: &'a Standard,
    chol: DenseChol,
}

impl<'a> KktSolver<'a> {
    /// Solves [0 G'; G -W'W] [x; z] = [p; q]; one refinement round.
    fn solve(
        &self,
        sc: &[SegScaling],
        p: &[f64],
        q: &[f64],
        x: &mut Vec<f64>,
        z: &mut Vec<f64>,
    ) {
        let st = self.st;
        let mut tmp_m = vec![0.0; st.m];
        let mut rhs = vec![0.0; st.n];

        // x = M^-1 (p + G' (W'W)^-1 q); z = (W'W)^-1 (G x - q)
        let mut solve_once = |p: &[f64], q: &[f64], x: &mut Vec<f64>, z: &mut Vec<f64>| {
            w2inv_apply_all(st, sc, q, &mut tmp_m);
            rmatvec(st, &tmp_m, &mut rhs);
            for i in 0..st.n {
                rhs[i] += p[i];
            }
            self.chol.solve(&mut rhs);
            x.copy_from_slice(&rhs);
            matvec(st, x, &mut tmp_m);
            for i in 0..st.m {
                tmp_m[i] -= q[i];
            }
            w2inv_apply_all(st, sc, &tmp_m.clone(), &mut tmp_m);
            z.copy_from_slice(&tmp_m);
        };

        solve_once(p, q, x, z);

        // iterative refinement on the 2x2 system
        let mut res_p = vec![0.0; st.n];
        let mut res_q = vec![0.0; st.m];
        let mut wz = vec![0.0; st.m];
        let mut w2z = vec![0.0; st.m];
        let mut ex = vec![0.0; st.n];
        let mut ez = vec![0.0; st.m];
        for _ in 0..3 {
            rmatvec(st, z, &mut res_p);
            for i in 0..st.n {
                res_p[i] = p[i] - res_p[i];
            }
            matvec(st, x, &mut res_q);
            w_apply_all(st, sc, z, &mut wz);
            w_apply_all(st, sc, &wz, &mut w2z);
            for i in 0..st.m {
                res_q[i] = q[i] - (res_q[i] - w2z[i]);
            }
            let rnorm = res_p.iter().chain(res_q.iter()).map(|v| v * v).sum::<f64>();
            if rnorm < 1e-28 {
                break;
            }
            solve_once(&res_p, &res_q, &mut ex, &mut ez);
            for i in 0..st.n {
                x[i] += ex[i];
            }
            for i in 0..st.m {
                z[i] += ez[i];
            }
        }
    }
}

pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> SolveResult {
    let start = Instant::now();
    let st = standardize(program);
    let n = st.n;
    let m = st.m;
    let nu = st.barrier_degree + 1.0;

    let fail = |status: SolveStatus, iters: usize| SolveResult {
        status,
        x: vec![0.0; n],
        z: vec![0.0; m],
        objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        duality_gap: f64::INFINITY,
        iterations: iters,
        wall_time_s: start.elapsed().as_secs_f64(),
    };

    if n == 0 || m == 0 {
        return fail(SolveStatus::NumericalLimit, 0);
    }

    let base_reg = 1e-12;

    // --- initialization: least-squares point shifted into the cone interior
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut s = vec![0.0; m];
    {
        let id_scaling: Vec<SegScaling> = st
            .segs
            .iter()
            .map(|seg| SegScaling::NonNeg {
                w: vec![1.0; seg.dim],
                lambda: vec![1.0; seg.dim],
            })
            .collect();
        let mut mbuf = vec![0.0; n * n];
        assemble_normal_matrix(&st, &id_scaling, 1e-9, &mut mbuf);
        let chol = match DenseChol::factor(n, &mbuf) {
            Some(c) => c,
            None => return fail(SolveStatus::NumericalLimit, 0),
        };
        // primal: min ||Gx - h||  => s = h - Gx
        let mut rhs = vec![0.0; n];
        rmatvec(&st, &st.h, &mut rhs);
        chol.solve(&mut rhs);
        x.copy_from_slice(&rhs);
        let mut gx = vec![0.0; m];
        matvec(&st, &x, &mut gx);
        for i in 0..m {
            s[i] = st.h[i] - gx[i];
        }
        let mrg = margin(&st, &s);
        if mrg <= 0.0 {
            add_identity(&st, &mut s, 1.0 - mrg);
        }
        // dual: G'z = -c with z = G x2, (G'G) x2 = -c
        let mut rhs2: Vec<f64> = st.c.iter().map(|&v| -v).collect();
        let mut tmp = vec![0.0; n];
        tmp.copy_from_slice(&rhs2);
        chol.solve(&mut tmp);
        rhs2 = tmp;
        matvec(&st, &rhs2, &mut z);
        let mrg = margin(&st, &z);
        if mrg <= 0.0 {
            add_identity(&st, &mut z, 1.0 - mrg);
        }
    }
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let mut best: Option<(f64, SolveResult)> = None;
    let mut tiny_steps = 0usize;
    let mut mbuf = vec![0.0; n * n];

    let mut rx = vec![0.0; n];
    let mut rz = vec![0.0; m];
    let mut iters_done = 0usize;

    for iter in 0..settings.max_iters {
        iters_done = iter;
        // residuals
        rmatvec(&st, &z, &mut rx);
        for i in 0..n {
            rx[i] += st.c[i] * tau;
        }
        matvec(&st, &x, &mut rz);
        for i in 0..m {
            rz[i] += s[i] - st.h[i] * tau;
        }
        let rtau = kappa + dot(&st.c, &x) + dot(&st.h, &z);

        let pcost = dot(&st.c, &x) / tau;
        let gap = dot(&s, &z) / (tau * tau);
        let pres = rz.iter().map(|v| v * v).sum::<f64>().sqrt() / tau / (1.0 + st.norm_h);
        let dres = rx.iter().map(|v| v * v).sum::<f64>().sqrt() / tau / (1.0 + st.norm_c);
        let relgap = gap / pcost.abs().max(1.0);

        let score = pres.max(dres).max(relgap);
        let make_result = |status: SolveStatus| SolveResult {
            status,
            x: x.iter().map(|&v| v / tau).collect(),
            z: z.iter().map(|&v| v / tau).collect(),
            objective: -pcost + program.objective_constant,
            primal_residual: pres,
            dual_residual: dres,
            duality_gap: relgap,
            iterations: iter,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, make_result(SolveStatus::NumericalLimit)));
        }

        if pres <= settings.tol_feas && dres <= settings.tol_feas && relgap <= settings.tol_gap {
            let mut r = make_result(SolveStatus::Optimal);
            r.wall_time_s = start.elapsed().as_secs_f64();
            return r;
        }

        // infeasibility certificates (normalized: h'z = -1 resp. c'x = -1)
        let hz = dot(&st.h, &z);
        if hz < 0.0 {
            let mut gtz = vec![0.0; n];
            rmatvec(&st, &z, &mut gtz);
            let ngtz = gtz.iter().map(|v| v * v).sum::<f64>().sqrt();
            if ngtz <= settings.tol_feas * (-hz) * (1.0 + st.norm_c) {
                let scale = -1.0 / hz;
                return SolveResult {
                    status: SolveStatus::PrimalInfeasible,
                    x: vec![0.0; n],
                    z: z.iter().map(|&v| v * scale).collect(),
                    objective: f64::NAN,
                    primal_residual: pres,
                    dual_residual: dres,
                    duality_gap: relgap,
                    iterations: iter,
                    wall_time_s: start.elapsed().as_secs_f64(),
                };
            }
        }
        let cx = dot(&st.c, &x);
        if cx < 0.0 {
            let mut gxs = vec![0.0; m];
            matvec(&st, &x, &mut gxs);
            for i in 0..m {
                gxs[i] += s[i];
            }
            let ngxs = gxs.iter().map(|v| v * v).sum::<f64>().sqrt();
            if ngxs <= settings.tol_feas * (-cx) * (1.0 + st.norm_h) {
                let scale = -1.0 / cx;
                return SolveResult {
                    status: SolveStatus::DualInfeasible,
                    x: x.iter().map(|&v| v * scale).collect(),
                    z: vec![0.0; m],
                    objective: f64::NAN,
                    primal_residual: pres,
                    dual_residual: dres,
                    duality_gap: relgap,
                    iterations: iter,
                    wall_time_s: start.elapsed().as_secs_f64(),
                };
            }
        }

        let mu = (dot(&s, &z) + tau * kappa) / nu;
        if mu <= 0.0 || !mu.is_finite() {
            break;
        }

        // NT scaling and KKT factorization (retry with stronger regularization)
        let sc = match compute_scalings(&st, &s, &z) {
            Some(sc) => sc,
            None => break,
        };
        let mut reg = base_reg;
        let mut chol = None;
        for _ in 0..4 {
            assemble_normal_matrix(&st, &sc, reg, &mut mbuf);
            if let Some(c) = DenseChol::factor(n, &mbuf) {
                chol = Some(c);
                break;
            }
            reg *= 100.0;
        }
        let chol = match chol {
            Some(c) => c,
            None => break,
        };
        let kkt = KktSolver { st: &st, chol };

        // constant direction for the tau elimination: K [x1; z1] = [-c; h]
        let neg_c: Vec<f64> = st.c.iter().map(|&v| -v).collect();
        let mut x1 = vec![0.0; n];
        let mut z1 = vec![0.0; m];
        kkt.solve(&sc, &neg_c, &st.h, &mut x1, &mut z1);
        let dtau_denom = dot(&st.c, &x1) + dot(&st.h, &z1) - kappa / tau;

        let mut lam2 = vec![0.0; m];
        lambda_sq(&st, &sc, &mut lam2);

        // direction for a given sigma and corrections
        let mut wv = vec![0.0; m];
        let mut v = vec![0.0; m];
        let mut dcomp = vec![0.0; m];
        let mut compute_direction = |sigma: f64,
                                     corr: Option<(&[f64], f64)>,
                                     dx: &mut Vec<f64>,
                                     dz: &mut Vec<f64>,
                                     ds: &mut Vec<f64>,
                                     dtau: &mut f64,
                                     dkappa: &mut f64| {
            for i in 0..m {
                dcomp[i] = -lam2[i] - corr.map_or(0.0, |(c, _)| c[i]);
            }
            add_identity(&st, &mut dcomp, sigma * mu);
            jordan_div_lambda(&st, &sc, &dcomp, &mut v);
            w_apply_all(&st, &sc, &v, &mut wv);

            let one_minus = 1.0 - sigma;
            let px: Vec<f64> = rx.iter().map(|&r| -one_minus * r).collect();
            let qz: Vec<f64> = rz
                .iter()
                .zip(&wv)
                .map(|(&r, &w)| -one_minus * r - w)
                .collect();
            let mut x2 = vec![0.0; n];
            let mut z2 = vec![0.0; m];
            kkt.solve(&sc, &px, &qz, &mut x2, &mut z2);

            let corr_tk = corr.map_or(0.0, |(_, c)| c);
            let w0 = (sigma * mu - tau * kappa - corr_tk) / tau;
            let num = -one_minus * rtau - w0 - dot(&st.c, &x2) - dot(&st.h, &z2);
            *dtau = num / dtau_denom;

            for i in 0..n {
                dx[i] = x2[i] + *dtau * x1[i];
            }
            for i in 0..m {
                dz[i] = z2[i] + *dtau * z1[i];
            }
            // ds from the primal embedding row keeps the triple consistent
            let mut gdx = vec![0.0; m];
            matvec(&st, dx, &mut gdx);
            for i in 0..m {
                ds[i] = -one_minus * rz[i] - gdx[i] + *dtau * st.h[i];
            }
            *dkappa = w0 - (kappa / tau) * *dtau;
        };

        // predictor
        let mut dx = vec![0.0; n];
        let mut dz = vec![0.0; m];
        let mut ds = vec![0.0; m];
        let mut dtau = 0.0;
        let mut dkappa = 0.0;
        compute_direction(0.0, None, &mut dx, &mut dz, &mut ds, &mut dtau, &mut dkappa);

        let mut alpha = step_to_boundary(&st, &s, &ds, 1.0);
        alpha = step_to_boundary(&st, &z, &dz, alpha);
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-kappa / dkappa);
        }
        let mu_aff = {
            let mut acc = (tau + alpha * dtau) * (kappa + alpha * dkappa);
            for i in 0..m {
                acc += (s[i] + alpha * ds[i]) * (z[i] + alpha * dz[i]);
            }
            acc / nu
        };
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Mehrotra correction in the scaled space
        let mut winv_ds = vec![0.0; m];
        winv_apply_all(&st, &sc, &ds, &mut winv_ds);
        let mut w_dz = vec![0.0; m];
        w_apply_all(&st, &sc, &dz, &mut w_dz);
        let mut corr = vec![0.0; m];
        jordan_prod(&st, &winv_ds, &w_dz, &mut corr);
        let corr_tk = dtau * dkappa;

        compute_direction(
            sigma,
            Some((&corr, corr_tk)),
            &mut dx,
            &mut dz,
            &mut ds,
            &mut dtau,
            &mut dkappa,
        );

        let mut amax = step_to_boundary(&st, &s, &ds, f64::INFINITY);
        amax = step_to_boundary(&st, &z, &dz, amax);
        if dtau < 0.0 {
            amax = amax.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            amax = amax.min(-kappa / dkappa);
        }
        let step = (0.99 * amax).min(1.0);
        if step < 1e-9 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                break;
            }
        } else {
            tiny_steps = 0;
        }

        for i in 0..n {
            x[i] += step * dx[i];
        }
        for i in 0..m {
            z[i] += step * dz[i];
            s[i] += step * ds[i];
        }
        tau += step * dtau;
        kappa += step * dkappa;

        if tau <= 0.0 || kappa < 0.0 || !tau.is_finite() {
            break;
        }
    }

    match best {
        Some((_, mut r)) => {
            r.iterations = iters_done;
            r.wall_time_s = start.elapsed().as_secs_f64();
            r
        }
        None => fail(SolveStatus::NumericalLimit, iters_done),
    }
}
