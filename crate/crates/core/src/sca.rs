//! Convexification toolbox for the nonconvex joint design problem: the
//! concave lower bound on the beampattern gain, the convex restrictions of
//! the communication-SINR, leakage, and total-power constraints, the
//! passive-mode penalty objective, and the feasibility-restoration variant.
//! Everything is emitted around an immutable [`ExpansionPoint`] as
//! second-order-cone-representable blocks on a conic program builder.
//!
//! Conventions for the real lift: every complex scalar becomes the pair
//! (re, im); complex decision vectors are flattened in that order. Each
//! convex quadratic `||v||^2 <= upper` is lifted through the rotated cone
//! `(upper, 1/2, v)`; bounds built from the `2 Re{v'u} - ||v||^2` expansion
//! stay affine.
//!
//! Two bound families do all the work:
//!
//! * a concave minorant of `|r x|^2` for an effective row `r` coupled to the
//!   RIS vector, tight at the expansion point (used by the objective, the
//!   SINR numerator, and the leakage denominator), and
//! * convex majorants of `+-Re{r x}` / `+-Im{r x}` obtained by splitting the
//!   bilinear product into squared norms and linearizing the concave halves
//!   (used by every interference, leakage-numerator, and RIS-output term).

use num_complex::Complex64;

use risbeam_conic::{Cone, ConicProgram, LinExpr, ProgramBuilder, VarId};

use crate::metrics::BeamformingSolution;
use crate::scene::{ChannelSet, RisMode, SystemConfig};

const J: Complex64 = Complex64::new(0.0, 1.0);

// ---------------------------------------------------------------------------
// complex affine expressions
// ---------------------------------------------------------------------------

/// Complex affine expression as a (re, im) pair of real expressions.
#[derive(Debug, Clone)]
pub struct CExpr {
    pub re: LinExpr,
    pub im: LinExpr,
}

impl CExpr {
    pub fn constant(c: Complex64) -> Self {
        Self {
            re: LinExpr::constant(c.re),
            im: LinExpr::constant(c.im),
        }
    }

    pub fn from_vars(re: VarId, im: VarId) -> Self {
        Self {
            re: LinExpr::var(re),
            im: LinExpr::var(im),
        }
    }

    /// The conjugated variable pair (re, -im).
    pub fn conj_from_vars(re: VarId, im: VarId) -> Self {
        Self {
            re: LinExpr::var(re),
            im: LinExpr::term(im, -1.0),
        }
    }

    pub fn add(mut self, o: &CExpr) -> Self {
        self.re += o.re.clone();
        self.im += o.im.clone();
        self
    }

    pub fn sub(mut self, o: &CExpr) -> Self {
        self.re -= o.re.clone();
        self.im -= o.im.clone();
        self
    }

    /// Left-multiplication by a complex constant.
    pub fn scale(&self, c: Complex64) -> Self {
        let re = self.re.clone().scaled(c.re) - self.im.clone().scaled(c.im);
        let im = self.re.clone().scaled(c.im) + self.im.clone().scaled(c.re);
        Self { re, im }
    }

    pub fn eval(&self, point: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(point), self.im.eval(point))
    }
}

fn cvec_scale(v: &[CExpr], c: Complex64) -> Vec<CExpr> {
    v.iter().map(|e| e.scale(c)).collect()
}

fn cvec_add(a: &[CExpr], b: &[CExpr]) -> Vec<CExpr> {
    a.iter().zip(b).map(|(x, y)| x.clone().add(y)).collect()
}

fn cvec_sub(a: &[CExpr], b: &[CExpr]) -> Vec<CExpr> {
    a.iter().zip(b).map(|(x, y)| x.clone().sub(y)).collect()
}

/// Flattens complex rows into real rows (re, im interleaved), scaled by `w`.
fn flatten_scaled(v: &[CExpr], w: f64) -> Vec<LinExpr> {
    let mut out = Vec::with_capacity(2 * v.len());
    for e in v {
        out.push(e.re.clone().scaled(w));
        out.push(e.im.clone().scaled(w));
    }
    out
}

/// `sum_i Re{conj(b_i) e_i}` for constant `b`.
fn dot_re_conj(b: &[Complex64], e: &[CExpr]) -> LinExpr {
    let mut acc = LinExpr::zero();
    for (bi, ei) in b.iter().zip(e) {
        acc += ei.re.clone().scaled(bi.re) + ei.im.clone().scaled(bi.im);
    }
    acc
}

/// `sum_i Re{row_i e_i}` for a constant row vector.
fn dot_re_row(row: &[Complex64], e: &[CExpr]) -> LinExpr {
    let mut acc = LinExpr::zero();
    for (ri, ei) in row.iter().zip(e) {
        acc += ei.re.clone().scaled(ri.re) - ei.im.clone().scaled(ri.im);
    }
    acc
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

// ---------------------------------------------------------------------------
// the two published identities
// ---------------------------------------------------------------------------

/// Affine global lower bound on `||u||^2`, tight at `u = v_point`:
/// `2 Re{v' u} - ||v||^2`.
pub fn lb_normsq(u: &[CExpr], v_point: &[Complex64]) -> LinExpr {
    assert_eq!(u.len(), v_point.len(), "lb_normsq dimension mismatch");
    dot_re_conj(v_point, u).scaled(2.0) - LinExpr::constant(norm_sqr(v_point))
}

/// Numeric form of [`lb_normsq`] for oracle checks.
pub fn lb_normsq_value(u: &[Complex64], v: &[Complex64]) -> f64 {
    let inner: Complex64 = v.iter().zip(u).map(|(a, b)| a.conj() * b).sum();
    2.0 * inner.re - norm_sqr(v)
}

/// The norm-splitting identities for `Re{u' v}` and `Im{u' v}`:
/// `(1/4)(||u+v||^2 - ||u-v||^2)` and `(1/4)(||u-jv||^2 - ||u+jv||^2)`.
pub fn re_split(u: &[Complex64], v: &[Complex64]) -> (f64, f64) {
    assert_eq!(u.len(), v.len(), "re_split dimension mismatch");
    let addv: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    let subv: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let mjv: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a - J * b).collect();
    let pjv: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a + J * b).collect();
    (
        0.25 * (norm_sqr(&addv) - norm_sqr(&subv)),
        0.25 * (norm_sqr(&mjv) - norm_sqr(&pjv)),
    )
}

// ---------------------------------------------------------------------------
// expansion point
// ---------------------------------------------------------------------------

/// The previous iterate together with every cached constant the surrogates
/// reference. Immutable; rebuilt whenever the iterate moves.
#[derive(Debug, Clone)]
pub struct ExpansionPoint {
    pub x_prev: Vec<Vec<Complex64>>,
    pub theta_prev: Vec<Complex64>,
    /// Effective target row at the expansion point (1 x L).
    pub g_t_prev: Vec<Complex64>,
    /// Effective user rows at the expansion point (K rows of length L).
    pub h_prev: Vec<Vec<Complex64>>,
    /// `a[col] = g_t_prev . x_prev[col]` for every column.
    pub a: Vec<Complex64>,
    /// `b[col] = a[col] g_t_prev^H + x_prev[col]`.
    pub b: Vec<Vec<Complex64>>,
    /// `c[k] = h_prev[k] . x_prev[k]` for communication columns.
    pub c_c: Vec<Complex64>,
    /// `d[k] = c[k] h_prev[k]^H + x_prev[k]`.
    pub d_c: Vec<Vec<Complex64>>,
    /// `psi[n] = g_ris[n] theta_prev[n]`.
    pub psi: Vec<Complex64>,
}

fn row_dot(row: &[Complex64], col: &[Complex64]) -> Complex64 {
    row.iter().zip(col).map(|(a, b)| a * b).sum()
}

impl ExpansionPoint {
    pub fn new(
        x_prev: &[Vec<Complex64>],
        theta_prev: &[Complex64],
        channels: &ChannelSet,
    ) -> Self {
        let l = channels.num_bs();
        let k_users = channels.num_users();
        let g_t_prev = {
            let mut g = vec![Complex64::new(0.0, 0.0); l];
            for (n, th) in theta_prev.iter().enumerate() {
                for li in 0..l {
                    g[li] += channels.g_ris[n] * th * channels.g_mat[n][li];
                }
            }
            g
        };
        let mut h_prev = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let mut h = channels.h_direct[k].clone();
            for (n, th) in theta_prev.iter().enumerate() {
                for li in 0..l {
                    h[li] += channels.h_ris[k][n] * th * channels.g_mat[n][li];
                }
            }
            h_prev.push(h);
        }
        let a: Vec<Complex64> = x_prev.iter().map(|col| row_dot(&g_t_prev, col)).collect();
        let b: Vec<Vec<Complex64>> = x_prev
            .iter()
            .zip(&a)
            .map(|(col, ai)| {
                (0..l)
                    .map(|li| ai * g_t_prev[li].conj() + col[li])
                    .collect()
            })
            .collect();
        let c_c: Vec<Complex64> = (0..k_users)
            .map(|k| row_dot(&h_prev[k], &x_prev[k]))
            .collect();
        let d_c: Vec<Vec<Complex64>> = (0..k_users)
            .map(|k| {
                (0..l)
                    .map(|li| c_c[k] * h_prev[k][li].conj() + x_prev[k][li])
                    .collect()
            })
            .collect();
        let psi: Vec<Complex64> = channels
            .g_ris
            .iter()
            .zip(theta_prev)
            .map(|(g, t)| g * t)
            .collect();
        Self {
            x_prev: x_prev.to_vec(),
            theta_prev: theta_prev.to_vec(),
            g_t_prev,
            h_prev,
            a,
            b,
            c_c,
            d_c,
            psi,
        }
    }

    pub fn from_solution(sol: &BeamformingSolution, channels: &ChannelSet) -> Self {
        Self::new(&sol.columns, &sol.theta, channels)
    }
}

// ---------------------------------------------------------------------------
// numeric surrogate evaluation (used by the drivers and the oracle tests)
// ---------------------------------------------------------------------------

fn g_t_at(channels: &ChannelSet, theta: &[Complex64]) -> Vec<Complex64> {
    let l = channels.num_bs();
    let mut g = vec![Complex64::new(0.0, 0.0); l];
    for (n, th) in theta.iter().enumerate() {
        for li in 0..l {
            g[li] += channels.g_ris[n] * th * channels.g_mat[n][li];
        }
    }
    g
}

fn f_col_value(
    exp: &ExpansionPoint,
    col: usize,
    g_t_h: &[Complex64],
    x_col: &[Complex64],
) -> f64 {
    let a = exp.a[col];
    let b = &exp.b[col];
    let plus: Vec<Complex64> = g_t_h
        .iter()
        .zip(x_col)
        .map(|(g, x)| a * g + x)
        .collect();
    let minus: Vec<Complex64> = g_t_h
        .iter()
        .zip(x_col)
        .map(|(g, x)| a * g - x)
        .collect();
    let inner: Complex64 = b.iter().zip(&plus).map(|(bi, p)| bi.conj() * p).sum();
    inner.re - 0.5 * norm_sqr(b) - 0.5 * norm_sqr(&minus) - a.norm_sqr()
}

/// The concave minorant of the beampattern gain evaluated at a numeric point.
/// Equals the true gain at the expansion point and never exceeds it.
pub fn surrogate_gain(
    exp: &ExpansionPoint,
    channels: &ChannelSet,
    config: &SystemConfig,
    columns: &[Vec<Complex64>],
    theta: &[Complex64],
) -> f64 {
    let g_t = g_t_at(channels, theta);
    let g_t_h: Vec<Complex64> = g_t.iter().map(|c| c.conj()).collect();
    let mut total = 0.0;
    for (col, x_col) in columns.iter().enumerate() {
        total += f_col_value(exp, col, &g_t_h, x_col);
    }
    if config.sigma2_ris > 0.0 {
        for (n, th) in theta.iter().enumerate() {
            let fhat = 2.0 * (exp.psi[n].conj() * channels.g_ris[n] * th).re
                - exp.psi[n].norm_sqr();
            total += config.sigma2_ris * fhat;
        }
    }
    total
}

/// Linearized penalty term `zeta (2 Re{theta_prev' theta} - ||theta_prev||^2)`,
/// a global lower bound on `zeta ||theta||^2` tight at the expansion point.
pub fn penalty_value(exp: &ExpansionPoint, zeta: f64, theta: &[Complex64]) -> f64 {
    let inner: Complex64 = exp
        .theta_prev
        .iter()
        .zip(theta)
        .map(|(p, t)| p.conj() * t)
        .sum();
    zeta * (2.0 * inner.re - norm_sqr(&exp.theta_prev))
}

// ---------------------------------------------------------------------------
// variable map and slack handles
// ---------------------------------------------------------------------------

/// Decision-variable handles for one subproblem, in emission order.
#[derive(Debug, Clone)]
pub struct VarMap {
    pub l: usize,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    x0: usize,
    th0: usize,
    t0: usize,
    slacks: SlackSet,
    delta0: Option<usize>,
}

/// Handles for every auxiliary slack family of the restricted constraints:
/// interference magnitudes at users, leakage magnitudes at the target, and
/// RIS-output magnitudes in the power budget.
#[derive(Debug, Clone)]
pub struct SlackSet {
    wp_c0: usize,
    wpbar_c0: usize,
    wp_t0: usize,
    wpbar_t0: usize,
    tau0: usize,
    taubar0: usize,
    kap0: Option<usize>,
}

impl VarMap {
    pub fn x_re(&self, col: usize, li: usize) -> VarId {
        VarId(self.x0 + 2 * (col * self.l + li))
    }
    pub fn x_im(&self, col: usize, li: usize) -> VarId {
        VarId(self.x0 + 2 * (col * self.l + li) + 1)
    }
    pub fn th_re(&self, n: usize) -> VarId {
        VarId(self.th0 + 2 * n)
    }
    pub fn th_im(&self, n: usize) -> VarId {
        VarId(self.th0 + 2 * n + 1)
    }
    pub fn t_obj(&self, col: usize) -> VarId {
        VarId(self.t0 + col)
    }
    fn off_pair(&self, k: usize, kp: usize) -> usize {
        debug_assert!(kp != k);
        k * (self.k - 1) + if kp < k { kp } else { kp - 1 }
    }
    pub fn wp_c(&self, k: usize, kp: usize) -> VarId {
        VarId(self.slacks.wp_c0 + self.off_pair(k, kp))
    }
    pub fn wpbar_c(&self, k: usize, kp: usize) -> VarId {
        VarId(self.slacks.wpbar_c0 + self.off_pair(k, kp))
    }
    pub fn wp_t(&self, k: usize, m: usize) -> VarId {
        VarId(self.slacks.wp_t0 + k * self.m + m)
    }
    pub fn wpbar_t(&self, k: usize, m: usize) -> VarId {
        VarId(self.slacks.wpbar_t0 + k * self.m + m)
    }
    pub fn tau(&self, k: usize) -> VarId {
        VarId(self.slacks.tau0 + k)
    }
    pub fn taubar(&self, k: usize) -> VarId {
        VarId(self.slacks.taubar0 + k)
    }
    /// Power-budget slacks, active mode only; order: re/im for the K
    /// communication columns then the M sensing columns, each over n.
    pub fn kap_c(&self, k: usize, n: usize) -> VarId {
        VarId(self.slacks.kap0.expect("active-mode slack") + k * self.n + n)
    }
    pub fn kapbar_c(&self, k: usize, n: usize) -> VarId {
        VarId(self.slacks.kap0.expect("active-mode slack") + self.k * self.n + k * self.n + n)
    }
    pub fn kap_t(&self, m: usize, n: usize) -> VarId {
        VarId(self.slacks.kap0.expect("active-mode slack") + 2 * self.k * self.n + m * self.n + n)
    }
    pub fn kapbar_t(&self, m: usize, n: usize) -> VarId {
        VarId(
            self.slacks.kap0.expect("active-mode slack")
                + 2 * self.k * self.n
                + self.m * self.n
                + m * self.n
                + n,
        )
    }
    pub fn delta_c(&self, k: usize) -> VarId {
        VarId(self.delta0.expect("feasibility slack") + k)
    }
    pub fn delta_t(&self, k: usize) -> VarId {
        VarId(self.delta0.expect("feasibility slack") + self.k + k)
    }
    pub fn has_deltas(&self) -> bool {
        self.delta0.is_some()
    }

    /// Reads (X, theta) out of a solver primal point.
    pub fn extract(&self, point: &[f64]) -> BeamformingSolution {
        let columns = (0..self.k + self.m)
            .map(|c| {
                (0..self.l)
                    .map(|li| {
                        Complex64::new(
                            point[self.x_re(c, li).0],
                            point[self.x_im(c, li).0],
                        )
                    })
                    .collect()
            })
            .collect();
        let theta = (0..self.n)
            .map(|n| Complex64::new(point[self.th_re(n).0], point[self.th_im(n).0]))
            .collect();
        BeamformingSolution { columns, theta }
    }

    pub fn delta_sum(&self, point: &[f64]) -> f64 {
        if !self.has_deltas() {
            return 0.0;
        }
        (0..self.k)
            .map(|k| point[self.delta_c(k).0] + point[self.delta_t(k).0])
            .sum()
    }
}

// ---------------------------------------------------------------------------
// subproblem builder
// ---------------------------------------------------------------------------

/// Which problem the builder is assembling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubproblemKind {
    /// Active-RIS gain maximization.
    GainActive,
    /// Passive-RIS gain maximization with the penalty objective.
    GainPassive,
    /// Feasibility restoration (slack-sum minimization), either mode.
    Feasibility,
}

/// Emits one convex subproblem around an expansion point. The `build_*`
/// entry points assemble the complete programs; the individual block
/// emitters stay public for block-level tests and debug listings.
pub struct SubproblemBuilder<'a> {
    pub exp: &'a ExpansionPoint,
    pub channels: &'a ChannelSet,
    pub config: &'a SystemConfig,
    pb: ProgramBuilder,
    vm: VarMap,
    /// g_t^H as expressions in conj(theta), length L.
    gt_h: Vec<CExpr>,
    /// h_k^H rows as expressions in conj(theta), K x L.
    h_h: Vec<Vec<CExpr>>,
    x_expr: Vec<Vec<CExpr>>,
    th_expr: Vec<CExpr>,
    th_conj_expr: Vec<CExpr>,
    /// Affine part of f per column; the epigraph variable completes it.
    f_affine: Vec<LinExpr>,
    /// `sum_n fhat_n` as an affine expression in theta.
    fhat_sum: LinExpr,
}

impl<'a> SubproblemBuilder<'a> {
    pub fn new(
        exp: &'a ExpansionPoint,
        channels: &'a ChannelSet,
        config: &'a SystemConfig,
        kind: SubproblemKind,
    ) -> Self {
        let l = config.bs_antennas;
        let k = config.users;
        let m = config.sensing_streams;
        let n = config.ris_elements;
        let active = config.ris_mode == RisMode::Active;

        let mut pb = ProgramBuilder::new();
        let x0 = pb.num_vars();
        for col in 0..k + m {
            for li in 0..l {
                pb.add_var(format!("x_re[{col}][{li}]"));
                pb.add_var(format!("x_im[{col}][{li}]"));
            }
        }
        let th0 = pb.num_vars();
        for ni in 0..n {
            pb.add_var(format!("th_re[{ni}]"));
            pb.add_var(format!("th_im[{ni}]"));
        }
        let t0 = pb.num_vars();
        for col in 0..k + m {
            pb.add_var(format!("t_obj[{col}]"));
        }
        let wp_c0 = pb.num_vars();
        for k1 in 0..k {
            for idx in 0..k.saturating_sub(1) {
                pb.add_var(format!("wp_c[{k1}][{idx}]"));
            }
        }
        let wpbar_c0 = pb.num_vars();
        for k1 in 0..k {
            for idx in 0..k.saturating_sub(1) {
                pb.add_var(format!("wpbar_c[{k1}][{idx}]"));
            }
        }
        let wp_t0 = pb.num_vars();
        for k1 in 0..k {
            for mi in 0..m {
                pb.add_var(format!("wp_t[{k1}][{mi}]"));
            }
        }
        let wpbar_t0 = pb.num_vars();
        for k1 in 0..k {
            for mi in 0..m {
                pb.add_var(format!("wpbar_t[{k1}][{mi}]"));
            }
        }
        let tau0 = pb.num_vars();
        for k1 in 0..k {
            pb.add_var(format!("tau[{k1}]"));
        }
        let taubar0 = pb.num_vars();
        for k1 in 0..k {
            pb.add_var(format!("taubar[{k1}]"));
        }
        let kap0 = if active {
            let base = pb.num_vars();
            for fam in ["kap_c", "kapbar_c"] {
                for k1 in 0..k {
                    for ni in 0..n {
                        pb.add_var(format!("{fam}[{k1}][{ni}]"));
                    }
                }
            }
            for fam in ["kap_t", "kapbar_t"] {
                for mi in 0..m {
                    for ni in 0..n {
                        pb.add_var(format!("{fam}[{mi}][{ni}]"));
                    }
                }
            }
            Some(base)
        } else {
            None
        };
        let delta0 = if kind == SubproblemKind::Feasibility {
            let base = pb.num_vars();
            for k1 in 0..k {
                pb.add_var(format!("delta_c[{k1}]"));
            }
            for k1 in 0..k {
                pb.add_var(format!("delta_t[{k1}]"));
            }
            Some(base)
        } else {
            None
        };

        let vm = VarMap {
            l,
            k,
            m,
            n,
            x0,
            th0,
            t0,
            slacks: SlackSet {
                wp_c0,
                wpbar_c0,
                wp_t0,
                wpbar_t0,
                tau0,
                taubar0,
                kap0,
            },
            delta0,
        };

        let th_expr: Vec<CExpr> = (0..n)
            .map(|ni| CExpr::from_vars(vm.th_re(ni), vm.th_im(ni)))
            .collect();
        let th_conj_expr: Vec<CExpr> = (0..n)
            .map(|ni| CExpr::conj_from_vars(vm.th_re(ni), vm.th_im(ni)))
            .collect();
        let x_expr: Vec<Vec<CExpr>> = (0..k + m)
            .map(|c| {
                (0..l)
                    .map(|li| CExpr::from_vars(vm.x_re(c, li), vm.x_im(c, li)))
                    .collect()
            })
            .collect();

        // g_t^H[l] = sum_n conj(g_ris[n] G[n][l]) conj(theta_n)
        let gt_h: Vec<CExpr> = (0..l)
            .map(|li| {
                let mut e = CExpr::constant(Complex64::new(0.0, 0.0));
                for ni in 0..n {
                    let w = (channels.g_ris[ni] * channels.g_mat[ni][li]).conj();
                    e = e.add(&th_conj_expr[ni].scale(w));
                }
                e
            })
            .collect();
        // h_k^H[l] = conj(h_direct) + sum_n conj(h_ris[k][n] G[n][l]) conj(theta_n)
        let h_h: Vec<Vec<CExpr>> = (0..k)
            .map(|k1| {
                (0..l)
                    .map(|li| {
                        let mut e = CExpr::constant(channels.h_direct[k1][li].conj());
                        for ni in 0..n {
                            let w = (channels.h_ris[k1][ni] * channels.g_mat[ni][li]).conj();
                            e = e.add(&th_conj_expr[ni].scale(w));
                        }
                        e
                    })
                    .collect()
            })
            .collect();

        // Affine parts of f per column and the epigraph cones
        // t_col >= 1/2 ||a g_t^H - x_col||^2.
        let mut f_affine = Vec::with_capacity(k + m);
        for col in 0..k + m {
            let a = exp.a[col];
            let plus = cvec_add(&cvec_scale(&gt_h, a), &x_expr[col]);
            let minus = cvec_sub(&cvec_scale(&gt_h, a), &x_expr[col]);
            let aff = dot_re_conj(&exp.b[col], &plus)
                - LinExpr::constant(0.5 * norm_sqr(&exp.b[col]) + a.norm_sqr());
            f_affine.push(aff);
            pb.quad_le(
                flatten_scaled(&minus, std::f64::consts::FRAC_1_SQRT_2),
                LinExpr::var(vm.t_obj(col)),
                format!("gain_quad[{col}]"),
            );
        }

        let mut fhat_sum = LinExpr::zero();
        for ni in 0..n {
            // fhat_n = 2 Re{psi_n' g_ris[n] theta_n} - |psi_n|^2
            let scaled = th_expr[ni].scale(channels.g_ris[ni]);
            fhat_sum += dot_re_conj(std::slice::from_ref(&exp.psi[ni]), &[scaled]).scaled(2.0)
                - LinExpr::constant(exp.psi[ni].norm_sqr());
        }

        Self {
            exp,
            channels,
            config,
            pb,
            vm,
            gt_h,
            h_h,
            x_expr,
            th_expr,
            th_conj_expr,
            f_affine,
            fhat_sum,
        }
    }

    pub fn var_map(&self) -> &VarMap {
        &self.vm
    }

    /// `f_col` as an affine expression over the epigraph variable.
    fn f_total(&self, col: usize) -> LinExpr {
        self.f_affine[col].clone() - LinExpr::var(self.vm.t_obj(col))
    }

    /// The concave minorant of the beampattern gain as the maximize
    /// objective expression (affine over the lifted variables).
    pub fn objective_lower_bound(&self) -> LinExpr {
        let mut obj = LinExpr::zero();
        for col in 0..self.vm.k + self.vm.m {
            obj += self.f_total(col);
        }
        if self.config.sigma2_ris > 0.0 {
            obj += self.fhat_sum.clone().scaled(self.config.sigma2_ris);
        }
        obj
    }

    /// Passive-mode objective: the gain minorant plus the linearized
    /// unit-modulus penalty.
    pub fn pris_objective(&self, zeta: f64) -> LinExpr {
        let mut obj = self.objective_lower_bound();
        let mut pen = LinExpr::zero();
        for ni in 0..self.vm.n {
            pen += dot_re_conj(
                std::slice::from_ref(&self.exp.theta_prev[ni]),
                std::slice::from_ref(&self.th_expr[ni]),
            )
            .scaled(2.0);
        }
        pen -= LinExpr::constant(norm_sqr(&self.exp.theta_prev));
        obj += pen.scaled(zeta);
        obj
    }

    /// Minimized slack sum for feasibility restoration, returned as a
    /// maximize expression.
    pub fn feasibility_objective(&mut self) -> LinExpr {
        let mut obj = LinExpr::zero();
        for k1 in 0..self.vm.k {
            self.pb
                .nonneg(LinExpr::var(self.vm.delta_c(k1)), format!("delta_c_nn[{k1}]"));
            self.pb
                .nonneg(LinExpr::var(self.vm.delta_t(k1)), format!("delta_t_nn[{k1}]"));
            obj -= LinExpr::var(self.vm.delta_c(k1));
            obj -= LinExpr::var(self.vm.delta_t(k1));
        }
        obj
    }

    /// One convex majorant cone for `slack >= +-Re / +-Im of (row . x_col)`.
    /// `c` selects the variant: +1 bounds +Re, -1 bounds -Re, -j bounds +Im,
    /// +j bounds -Im.
    #[allow(clippy::too_many_arguments)]
    fn abs_bound_cone(
        &mut self,
        v_h_expr: &[CExpr],
        v_row_prev: &[Complex64],
        x_expr: &[CExpr],
        x_prev: &[Complex64],
        c: Complex64,
        slack: VarId,
        label: String,
    ) {
        // quad: 1/4 ||v^H + c x||^2
        let plus = cvec_add(v_h_expr, &cvec_scale(x_expr, c));
        let rows = flatten_scaled(&plus, 0.5);
        // linearized part: -(1/2) Re{row_c (v^H - c x)} + (1/4)||v_prev^H - c x_prev||^2
        let row_c: Vec<Complex64> = v_row_prev
            .iter()
            .zip(x_prev)
            .map(|(v, x)| v - c.conj() * x.conj())
            .collect();
        let minus_expr = cvec_sub(v_h_expr, &cvec_scale(x_expr, c));
        let lin = dot_re_row(&row_c, &minus_expr).scaled(-0.5);
        let const_term: f64 = v_row_prev
            .iter()
            .zip(x_prev)
            .map(|(v, x)| (v.conj() - c * x).norm_sqr())
            .sum::<f64>()
            * 0.25;
        let upper = LinExpr::var(slack) - lin - LinExpr::constant(const_term);
        self.pb.quad_le(rows, upper, label);
    }

    /// All four majorant cones for a complex product magnitude pair.
    #[allow(clippy::too_many_arguments)]
    fn abs_re_im_bounds(
        &mut self,
        v_h_expr: &[CExpr],
        v_row_prev: &[Complex64],
        x_expr: &[CExpr],
        x_prev: &[Complex64],
        slack_re: VarId,
        slack_im: VarId,
        prefix: &str,
    ) {
        let one = Complex64::new(1.0, 0.0);
        self.abs_bound_cone(
            v_h_expr,
            v_row_prev,
            x_expr,
            x_prev,
            one,
            slack_re,
            format!("{prefix}_re_pos"),
        );
        self.abs_bound_cone(
            v_h_expr,
            v_row_prev,
            x_expr,
            x_prev,
            -one,
            slack_re,
            format!("{prefix}_re_neg"),
        );
        self.abs_bound_cone(
            v_h_expr,
            v_row_prev,
            x_expr,
            x_prev,
            -J,
            slack_im,
            format!("{prefix}_im_pos"),
        );
        self.abs_bound_cone(
            v_h_expr,
            v_row_prev,
            x_expr,
            x_prev,
            J,
            slack_im,
            format!("{prefix}_im_neg"),
        );
    }

    /// Restricted communication-SINR block for user k: the minorized
    /// numerator against the slack-majorized denominator, plus the eight
    /// interference-magnitude cones. With `relax` the feasibility slack
    /// enters the numerator side.
    pub fn comm_sinr_block(&mut self, k: usize, relax: bool) {
        let gamma = self.config.gamma_c[k];
        let exp = self.exp;
        let cck = exp.c_c[k];

        // numerator minorant rows: sqrt(1/(2 Gamma)) (c_k h_k^H - x_k)
        let scaled_h = cvec_scale(&self.h_h[k], cck);
        let minus = cvec_sub(&scaled_h, &self.x_expr[k]);
        let mut rows = flatten_scaled(&minus, (0.5 / gamma).sqrt());

        // slack squares
        for kp in 0..self.vm.k {
            if kp != k {
                rows.push(LinExpr::var(self.vm.wp_c(k, kp)));
                rows.push(LinExpr::var(self.vm.wpbar_c(k, kp)));
            }
        }
        for mi in 0..self.vm.m {
            rows.push(LinExpr::var(self.vm.wp_t(k, mi)));
            rows.push(LinExpr::var(self.vm.wpbar_t(k, mi)));
        }
        // dynamic-noise rows sqrt(sigma2_ris) h_ris[k][n] theta_n
        if self.config.sigma2_ris > 0.0 {
            let w = self.config.sigma2_ris.sqrt();
            for ni in 0..self.vm.n {
                let e = self.th_expr[ni].scale(self.channels.h_ris[k][ni]);
                rows.push(e.re.scaled(w));
                rows.push(e.im.scaled(w));
            }
        }

        // numerator affine part: (1/Gamma)(Re{d'(c h^H + x)} - 1/2||d||^2 - |c|^2)
        let plus = cvec_add(&scaled_h, &self.x_expr[k]);
        let aff = dot_re_conj(&exp.d_c[k], &plus)
            - LinExpr::constant(0.5 * norm_sqr(&exp.d_c[k]) + cck.norm_sqr());
        let mut upper =
            aff.scaled(1.0 / gamma) - LinExpr::constant(self.config.sigma2_user[k]);
        if relax {
            upper += LinExpr::var(self.vm.delta_c(k));
        }
        self.pb.quad_le(rows, upper, format!("comm_sinr[{k}]"));

        // interference magnitude cones
        let h_h_k = self.h_h[k].clone();
        let h_prev_k = exp.h_prev[k].clone();
        for kp in 0..self.vm.k {
            if kp == k {
                continue;
            }
            let slack_re = self.vm.wp_c(k, kp);
            let slack_im = self.vm.wpbar_c(k, kp);
            let x_expr = self.x_expr[kp].clone();
            let x_prev = exp.x_prev[kp].clone();
            self.abs_re_im_bounds(
                &h_h_k,
                &h_prev_k,
                &x_expr,
                &x_prev,
                slack_re,
                slack_im,
                &format!("comm_intf[{k}][{kp}]"),
            );
        }
        for mi in 0..self.vm.m {
            let col = self.vm.k + mi;
            let slack_re = self.vm.wp_t(k, mi);
            let slack_im = self.vm.wpbar_t(k, mi);
            let x_expr = self.x_expr[col].clone();
            let x_prev = exp.x_prev[col].clone();
            self.abs_re_im_bounds(
                &h_h_k,
                &h_prev_k,
                &x_expr,
                &x_prev,
                slack_re,
                slack_im,
                &format!("comm_sense[{k}][{mi}]"),
            );
        }
    }

    /// Restricted information-leakage block for user k: target-side
    /// denominator minorant against the majorized leakage numerator. With
    /// `relax` the feasibility slack loosens the ceiling.
    pub fn leakage_block(&mut self, k: usize, relax: bool) {
        let gamma_t = self.config.gamma_t[k];
        let w = (1.0 / gamma_t).sqrt();
        let rows = vec![
            LinExpr::term(self.vm.tau(k), w),
            LinExpr::term(self.vm.taubar(k), w),
        ];
        let mut upper = LinExpr::constant(self.config.sigma2_target);
        for kp in 0..self.vm.k {
            if kp != k {
                upper += self.f_total(kp);
            }
        }
        for mi in 0..self.vm.m {
            upper += self.f_total(self.vm.k + mi);
        }
        if self.config.sigma2_ris > 0.0 {
            upper += self.fhat_sum.clone().scaled(self.config.sigma2_ris);
        }
        if relax {
            upper += LinExpr::var(self.vm.delta_t(k));
        }
        self.pb.quad_le(rows, upper, format!("leakage[{k}]"));

        let gt_h = self.gt_h.clone();
        let gt_prev = self.exp.g_t_prev.clone();
        let x_expr = self.x_expr[k].clone();
        let x_prev = self.exp.x_prev[k].clone();
        let slack_re = self.vm.tau(k);
        let slack_im = self.vm.taubar(k);
        self.abs_re_im_bounds(
            &gt_h,
            &gt_prev,
            &x_expr,
            &x_prev,
            slack_re,
            slack_im,
            &format!("leak_mag[{k}]"),
        );
    }

    /// Restricted joint power budget for the active mode: BS power plus the
    /// slack-majorized RIS output power plus the dynamic-noise power.
    pub fn power_block_active(&mut self) {
        let vm = &self.vm;
        let mut rows = Vec::new();
        for col in 0..vm.k + vm.m {
            rows.extend(flatten_scaled(&self.x_expr[col], 1.0));
        }
        for k1 in 0..vm.k {
            for ni in 0..vm.n {
                rows.push(LinExpr::var(vm.kap_c(k1, ni)));
                rows.push(LinExpr::var(vm.kapbar_c(k1, ni)));
            }
        }
        for mi in 0..vm.m {
            for ni in 0..vm.n {
                rows.push(LinExpr::var(vm.kap_t(mi, ni)));
                rows.push(LinExpr::var(vm.kapbar_t(mi, ni)));
            }
        }
        let w = self.config.sigma2_ris.sqrt();
        for ni in 0..vm.n {
            rows.push(LinExpr::term(vm.th_re(ni), w));
            rows.push(LinExpr::term(vm.th_im(ni), w));
        }
        let upper = LinExpr::constant(self.config.p_max);
        self.pb.quad_le(rows, upper, "power_budget".to_string());

        // per-element RIS output magnitude cones: row = theta_n g_n
        for ni in 0..self.vm.n {
            let g_row = self.channels.g_mat[ni].clone();
            let th_prev = self.exp.theta_prev[ni];
            // v^H[l] = conj(G[n][l]) conj(theta_n); v_row_prev[l] = theta_prev G[n][l]
            let v_h: Vec<CExpr> = g_row
                .iter()
                .map(|g| self.th_conj_expr[ni].scale(g.conj()))
                .collect();
            let v_prev: Vec<Complex64> = g_row.iter().map(|g| th_prev * g).collect();
            for k1 in 0..self.vm.k {
                let slack_re = self.vm.kap_c(k1, ni);
                let slack_im = self.vm.kapbar_c(k1, ni);
                let x_expr = self.x_expr[k1].clone();
                let x_prev = self.exp.x_prev[k1].clone();
                self.abs_re_im_bounds(
                    &v_h,
                    &v_prev,
                    &x_expr,
                    &x_prev,
                    slack_re,
                    slack_im,
                    &format!("ris_out_c[{k1}][{ni}]"),
                );
            }
            for mi in 0..self.vm.m {
                let col = self.vm.k + mi;
                let slack_re = self.vm.kap_t(mi, ni);
                let slack_im = self.vm.kapbar_t(mi, ni);
                let x_expr = self.x_expr[col].clone();
                let x_prev = self.exp.x_prev[col].clone();
                self.abs_re_im_bounds(
                    &v_h,
                    &v_prev,
                    &x_expr,
                    &x_prev,
                    slack_re,
                    slack_im,
                    &format!("ris_out_t[{mi}][{ni}]"),
                );
            }
        }
    }

    /// BS-only power budget `||X||^2 <= p_max` for the passive mode.
    pub fn power_block_passive(&mut self) {
        let mut rows = Vec::new();
        for col in 0..self.vm.k + self.vm.m {
            rows.extend(flatten_scaled(&self.x_expr[col], 1.0));
        }
        let upper = LinExpr::constant(self.config.p_max);
        self.pb.quad_le(rows, upper, "power_budget".to_string());
    }

    /// Per-element amplitude discs `|theta_n| <= bound`.
    pub fn amplitude_constraints(&mut self, bound: f64) {
        for ni in 0..self.vm.n {
            self.pb.add_block(
                Cone::SecondOrder(3),
                vec![
                    LinExpr::constant(bound),
                    LinExpr::var(self.vm.th_re(ni)),
                    LinExpr::var(self.vm.th_im(ni)),
                ],
                format!("amplitude[{ni}]"),
            );
        }
    }

    pub fn finish_with_objective(mut self, objective: LinExpr) -> (ConicProgram, VarMap) {
        self.pb.add_objective_expr(&objective);
        (self.pb.finish(), self.vm)
    }
}

// ---------------------------------------------------------------------------
// whole-program assembly
// ---------------------------------------------------------------------------

/// The gain-maximization subproblem in the active mode.
pub fn build_gain_active(
    exp: &ExpansionPoint,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> (ConicProgram, VarMap) {
    let mut b = SubproblemBuilder::new(exp, channels, config, SubproblemKind::GainActive);
    for k in 0..config.users {
        b.comm_sinr_block(k, false);
        b.leakage_block(k, false);
    }
    b.power_block_active();
    b.amplitude_constraints(config.beta_max);
    let obj = b.objective_lower_bound();
    b.finish_with_objective(obj)
}

/// The penalized gain-maximization subproblem in the passive mode.
pub fn build_gain_passive(
    exp: &ExpansionPoint,
    channels: &ChannelSet,
    config: &SystemConfig,
    zeta: f64,
) -> (ConicProgram, VarMap) {
    let mut b = SubproblemBuilder::new(exp, channels, config, SubproblemKind::GainPassive);
    for k in 0..config.users {
        b.comm_sinr_block(k, false);
        b.leakage_block(k, false);
    }
    b.power_block_passive();
    b.amplitude_constraints(1.0);
    let obj = b.pris_objective(zeta);
    b.finish_with_objective(obj)
}

/// The feasibility-restoration subproblem: minimize the total SINR/leakage
/// slack under the unrelaxed power and amplitude constraints.
pub fn build_feasibility(
    exp: &ExpansionPoint,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> (ConicProgram, VarMap) {
    let mut b = SubproblemBuilder::new(exp, channels, config, SubproblemKind::Feasibility);
    let obj = b.feasibility_objective();
    for k in 0..config.users {
        b.comm_sinr_block(k, true);
        b.leakage_block(k, true);
    }
    match config.ris_mode {
        RisMode::Active => {
            b.power_block_active();
            b.amplitude_constraints(config.beta_max);
        }
        RisMode::Passive => {
            b.power_block_passive();
            b.amplitude_constraints(1.0);
        }
    }
    b.finish_with_objective(obj)
}

/// A full variable assignment at a numeric design point with every auxiliary
/// variable set to its minimal value: epigraphs at their quadratics, slacks
/// at the exact |Re|/|Im| magnitudes, feasibility slacks at the residual
/// shortfalls. At the expansion point this makes every surrogate bound tight.
pub fn assignment_at(
    vm: &VarMap,
    exp: &ExpansionPoint,
    channels: &ChannelSet,
    config: &SystemConfig,
    columns: &[Vec<Complex64>],
    theta: &[Complex64],
    num_vars: usize,
) -> Vec<f64> {
    let mut pt = vec![0.0; num_vars];
    for (col, x_col) in columns.iter().enumerate() {
        for (li, v) in x_col.iter().enumerate() {
            pt[vm.x_re(col, li).0] = v.re;
            pt[vm.x_im(col, li).0] = v.im;
        }
    }
    for (ni, th) in theta.iter().enumerate() {
        pt[vm.th_re(ni).0] = th.re;
        pt[vm.th_im(ni).0] = th.im;
    }
    let g_t = g_t_at(channels, theta);
    let g_t_h: Vec<Complex64> = g_t.iter().map(|c| c.conj()).collect();
    for (col, x_col) in columns.iter().enumerate() {
        let a = exp.a[col];
        let minus: Vec<Complex64> = g_t_h
            .iter()
            .zip(x_col)
            .map(|(g, x)| a * g - x)
            .collect();
        pt[vm.t_obj(col).0] = 0.5 * norm_sqr(&minus);
    }
    // effective user rows at the numeric point
    let l = channels.num_bs();
    let mut h_rows = Vec::with_capacity(vm.k);
    for k in 0..vm.k {
        let mut h = channels.h_direct[k].clone();
        for (n, th) in theta.iter().enumerate() {
            for li in 0..l {
                h[li] += channels.h_ris[k][n] * th * channels.g_mat[n][li];
            }
        }
        h_rows.push(h);
    }
    for k in 0..vm.k {
        for kp in 0..vm.k {
            if kp == k {
                continue;
            }
            let p = row_dot(&h_rows[k], &columns[kp]);
            pt[vm.wp_c(k, kp).0] = p.re.abs();
            pt[vm.wpbar_c(k, kp).0] = p.im.abs();
        }
        for mi in 0..vm.m {
            let p = row_dot(&h_rows[k], &columns[vm.k + mi]);
            pt[vm.wp_t(k, mi).0] = p.re.abs();
            pt[vm.wpbar_t(k, mi).0] = p.im.abs();
        }
        let p = row_dot(&g_t, &columns[k]);
        pt[vm.tau(k).0] = p.re.abs();
        pt[vm.taubar(k).0] = p.im.abs();
    }
    if config.ris_mode == RisMode::Active {
        for ni in 0..vm.n {
            for k1 in 0..vm.k {
                let p = theta[ni] * row_dot(&channels.g_mat[ni], &columns[k1]);
                pt[vm.kap_c(k1, ni).0] = p.re.abs();
                pt[vm.kapbar_c(k1, ni).0] = p.im.abs();
            }
            for mi in 0..vm.m {
                let p = theta[ni] * row_dot(&channels.g_mat[ni], &columns[vm.k + mi]);
                pt[vm.kap_t(mi, ni).0] = p.re.abs();
                pt[vm.kapbar_t(mi, ni).0] = p.im.abs();
            }
        }
    }
    if vm.has_deltas() {
        for k in 0..vm.k {
            // comm shortfall: denominator minus numerator over Gamma_c
            let mut denom = config.sigma2_user[k];
            for kp in 0..vm.k {
                if kp != k {
                    denom += row_dot(&h_rows[k], &columns[kp]).norm_sqr();
                }
            }
            for mi in 0..vm.m {
                denom += row_dot(&h_rows[k], &columns[vm.k + mi]).norm_sqr();
            }
            for (ni, th) in theta.iter().enumerate() {
                denom += config.sigma2_ris * (channels.h_ris[k][ni] * th).norm_sqr();
            }
            let sig = row_dot(&h_rows[k], &columns[k]).norm_sqr();
            pt[vm.delta_c(k).0] = (denom - sig / config.gamma_c[k]).max(0.0);

            // leakage excess: numerator over Gamma_t minus denominator
            let mut t_denom = config.sigma2_target;
            for kp in 0..vm.k {
                if kp != k {
                    t_denom += row_dot(&g_t, &columns[kp]).norm_sqr();
                }
            }
            for mi in 0..vm.m {
                t_denom += row_dot(&g_t, &columns[vm.k + mi]).norm_sqr();
            }
            for (ni, th) in theta.iter().enumerate() {
                t_denom += config.sigma2_ris * (channels.g_ris[ni] * th).norm_sqr();
            }
            let g_sig = row_dot(&g_t, &columns[k]).norm_sqr();
            pt[vm.delta_t(k).0] = (g_sig / config.gamma_t[k] - t_denom).max(0.0);
        }
    }
    pt
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_cvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn lb_normsq_tight_at_expansion_and_below_elsewhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..6);
            let u = rand_cvec(&mut rng, n);
            let v = rand_cvec(&mut rng, n);
            let bound = lb_normsq_value(&u, &v);
            let actual = norm_sqr(&u);
            assert!(bound <= actual + 1e-12);
            // gap is exactly ||u - v||^2
            let gap: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!((actual - bound - gap).abs() < 1e-10);
        }
        let v = rand_cvec(&mut rng, 4);
        assert!((lb_normsq_value(&v, &v) - norm_sqr(&v)).abs() < 1e-12);
        let u = rand_cvec(&mut rng, 4);
        assert_eq!(lb_normsq_value(&u, &[Complex64::new(0.0, 0.0); 4]), 0.0);
    }

    #[test]
    fn re_split_recovers_inner_product_parts() {
        let e1 = vec![Complex64::new(1.0, 0.0)];
        assert_eq!(re_split(&e1, &e1), (1.0, 0.0));
        let je1 = vec![Complex64::new(0.0, 1.0)];
        let (re, im) = re_split(&e1, &je1);
        assert!((re - 0.0).abs() < 1e-15 && (im - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let n = rng.gen_range(1..7);
            let u = rand_cvec(&mut rng, n);
            let v = rand_cvec(&mut rng, n);
            let inner: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            let (re, im) = re_split(&u, &v);
            assert!((re - inner.re).abs() < 1e-12);
            assert!((im - inner.im).abs() < 1e-12);
        }
    }

    #[test]
    fn lb_normsq_expression_matches_numeric_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // two variables as a 1-complex-vector expression
        let mut pb = ProgramBuilder::new();
        let re = pb.add_var("re");
        let im = pb.add_var("im");
        let u_expr = vec![CExpr::from_vars(re, im)];
        for _ in 0..50 {
            let v = rand_cvec(&mut rng, 1);
            let e = lb_normsq(&u_expr, &v);
            let pt = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let u = vec![Complex64::new(pt[0], pt[1])];
            assert!((e.eval(&pt) - lb_normsq_value(&u, &v)).abs() < 1e-12);
        }
    }
}
