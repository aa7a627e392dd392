//! Exact evaluation of every model quantity: effective channels, per-user
//! SINR, per-user leakage SINR at the target, beampattern gain, and total
//! power. The optimizer reports through these evaluators and tests use them
//! as the ground truth that surrogates are checked against.
//!
//! Conventions: the effective user channel is `h_k = h_Dk + h_Rk diag(theta) G`
//! and the effective target channel is `g_t = g_R diag(theta) G` (no direct
//! BS-target path). All quantities are linear (watts / linear ratios).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::scene::{ChannelSet, RisMode, SystemConfig};

/// Joint design point: BS beamformer columns and the RIS vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamformingSolution {
    /// `users + sensing_streams` columns, each of length `bs_antennas`;
    /// communication columns first.
    pub columns: Vec<Vec<Complex64>>,
    pub theta: Vec<Complex64>,
}

impl BeamformingSolution {
    pub fn zeros(l: usize, cols: usize, n: usize) -> Self {
        Self {
            columns: vec![vec![Complex64::new(0.0, 0.0); l]; cols],
            theta: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn comm_column(&self, k: usize) -> &[Complex64] {
        &self.columns[k]
    }

    pub fn sensing_column(&self, users: usize, m: usize) -> &[Complex64] {
        &self.columns[users + m]
    }

    pub fn max_theta_modulus(&self) -> f64 {
        self.theta.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }
}

/// All metrics plus signed constraint slacks; nonnegative slack means the
/// constraint is satisfied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub user_sinr: Vec<f64>,
    pub leakage_sinr: Vec<f64>,
    pub beampattern_gain: f64,
    pub total_power: f64,
    /// `user_sinr[k] - gamma_c[k]`.
    pub comm_residuals: Vec<f64>,
    /// `gamma_t[k] - leakage_sinr[k]`.
    pub leakage_residuals: Vec<f64>,
    /// `p_max - total_power`.
    pub power_residual: f64,
    /// Per-element amplitude slack: `beta_max - |theta_n|` in active mode,
    /// `1 - |theta_n|` in passive mode (the relaxed disc; unit modulus is
    /// enforced only at convergence).
    pub amplitude_residuals: Vec<f64>,
}

impl MetricReport {
    pub fn worst_residual(&self) -> f64 {
        let mut w = self.power_residual;
        for r in self
            .comm_residuals
            .iter()
            .chain(&self.leakage_residuals)
            .chain(&self.amplitude_residuals)
        {
            w = w.min(*r);
        }
        w
    }

    /// Documented CSV column order: `user_sinr_k` for k = 0..K, then
    /// `leakage_sinr_k`, then gain, power, then `comm_res_k`, `leak_res_k`,
    /// power residual, and the minimum amplitude residual.
    pub fn csv_header(users: usize) -> Vec<String> {
        let mut h = Vec::new();
        for k in 0..users {
            h.push(format!("user_sinr_{k}"));
        }
        for k in 0..users {
            h.push(format!("leakage_sinr_{k}"));
        }
        h.push("beampattern_gain".into());
        h.push("total_power".into());
        for k in 0..users {
            h.push(format!("comm_res_{k}"));
        }
        for k in 0..users {
            h.push(format!("leak_res_{k}"));
        }
        h.push("power_res".into());
        h.push("amp_res_min".into());
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = Vec::new();
        for v in &self.user_sinr {
            r.push(format!("{v:.12e}"));
        }
        for v in &self.leakage_sinr {
            r.push(format!("{v:.12e}"));
        }
        r.push(format!("{:.12e}", self.beampattern_gain));
        r.push(format!("{:.12e}", self.total_power));
        for v in &self.comm_residuals {
            r.push(format!("{v:.12e}"));
        }
        for v in &self.leakage_residuals {
            r.push(format!("{v:.12e}"));
        }
        r.push(format!("{:.12e}", self.power_residual));
        let amp = self
            .amplitude_residuals
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        r.push(format!("{amp:.12e}"));
        r
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("dimension mismatch between solution, channels, and config")]
    DimensionMismatch,
}

fn row_dot(row: &[Complex64], col: &[Complex64]) -> Complex64 {
    row.iter().zip(col).map(|(a, b)| a * b).sum()
}

/// `h_k = h_Dk + h_Rk diag(theta) G`, a 1 x L row.
pub fn effective_user_channel(
    k: usize,
    channels: &ChannelSet,
    theta: &[Complex64],
) -> Result<Vec<Complex64>, MetricsError> {
    if k >= channels.num_users() || theta.len() != channels.num_ris() {
        return Err(MetricsError::DimensionMismatch);
    }
    let l = channels.num_bs();
    let mut h = channels.h_direct[k].clone();
    for li in 0..l {
        let mut cascade = Complex64::new(0.0, 0.0);
        for (n, th) in theta.iter().enumerate() {
            cascade += channels.h_ris[k][n] * th * channels.g_mat[n][li];
        }
        h[li] += cascade;
    }
    Ok(h)
}

/// `g_t = g_R diag(theta) G`, a 1 x L row (no direct BS-target path).
pub fn effective_target_channel(
    channels: &ChannelSet,
    theta: &[Complex64],
) -> Result<Vec<Complex64>, MetricsError> {
    if theta.len() != channels.num_ris() {
        return Err(MetricsError::DimensionMismatch);
    }
    let l = channels.num_bs();
    let mut g = vec![Complex64::new(0.0, 0.0); l];
    for li in 0..l {
        for (n, th) in theta.iter().enumerate() {
            g[li] += channels.g_ris[n] * th * channels.g_mat[n][li];
        }
    }
    Ok(g)
}

/// SINR for decoding user k's stream at user k.
pub fn user_sinr(
    k: usize,
    solution: &BeamformingSolution,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<f64, MetricsError> {
    let h = effective_user_channel(k, channels, &solution.theta)?;
    let signal = row_dot(&h, solution.comm_column(k)).norm_sqr();
    let mut denom = config.sigma2_user[k];
    for kp in 0..config.users {
        if kp != k {
            denom += row_dot(&h, solution.comm_column(kp)).norm_sqr();
        }
    }
    for m in 0..config.sensing_streams {
        denom += row_dot(&h, solution.sensing_column(config.users, m)).norm_sqr();
    }
    denom += config.sigma2_ris * ris_weighted_theta_power(&channels.h_ris[k], &solution.theta);
    Ok(signal / denom)
}

/// SINR at the target for decoding user k's stream (information leakage).
pub fn leakage_sinr(
    k: usize,
    solution: &BeamformingSolution,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<f64, MetricsError> {
    let g = effective_target_channel(channels, &solution.theta)?;
    let signal = row_dot(&g, solution.comm_column(k)).norm_sqr();
    let mut denom = config.sigma2_target;
    for kp in 0..config.users {
        if kp != k {
            denom += row_dot(&g, solution.comm_column(kp)).norm_sqr();
        }
    }
    for m in 0..config.sensing_streams {
        denom += row_dot(&g, solution.sensing_column(config.users, m)).norm_sqr();
    }
    denom += config.sigma2_ris * ris_weighted_theta_power(&channels.g_ris, &solution.theta);
    Ok(signal / denom)
}

fn ris_weighted_theta_power(row: &[Complex64], theta: &[Complex64]) -> f64 {
    row.iter()
        .zip(theta)
        .map(|(r, t)| (r * t).norm_sqr())
        .sum()
}

/// Expected received signal-plus-amplified-noise power at the target.
pub fn beampattern_gain(
    solution: &BeamformingSolution,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<f64, MetricsError> {
    let g = effective_target_channel(channels, &solution.theta)?;
    let mut gain = 0.0;
    for col in &solution.columns {
        gain += row_dot(&g, col).norm_sqr();
    }
    gain += config.sigma2_ris * ris_weighted_theta_power(&channels.g_ris, &solution.theta);
    Ok(gain)
}

/// `||X||^2 + ||diag(theta) G X||^2 + sigma2_ris ||theta||^2`.
pub fn total_power(
    columns: &[Vec<Complex64>],
    theta: &[Complex64],
    g_mat: &[Vec<Complex64>],
    sigma2_ris: f64,
) -> f64 {
    let mut p = 0.0;
    for col in columns {
        p += col.iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    for (n, th) in theta.iter().enumerate() {
        for col in columns {
            let gx = row_dot(&g_mat[n], col);
            p += (th * gx).norm_sqr();
        }
    }
    p += sigma2_ris * theta.iter().map(|t| t.norm_sqr()).sum::<f64>();
    p
}

/// Evaluates every metric and signed constraint slack at a design point.
pub fn constraint_report(
    solution: &BeamformingSolution,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<MetricReport, MetricsError> {
    channels
        .check_dims(config)
        .map_err(|_| MetricsError::DimensionMismatch)?;
    if solution.columns.len() != config.total_columns()
        || solution.theta.len() != config.ris_elements
    {
        return Err(MetricsError::DimensionMismatch);
    }
    let mut user = Vec::with_capacity(config.users);
    let mut leak = Vec::with_capacity(config.users);
    for k in 0..config.users {
        user.push(user_sinr(k, solution, channels, config)?);
        leak.push(leakage_sinr(k, solution, channels, config)?);
    }
    let gain = beampattern_gain(solution, channels, config)?;
    let power = match config.ris_mode {
        RisMode::Active => total_power(
            &solution.columns,
            &solution.theta,
            &channels.g_mat,
            config.sigma2_ris,
        ),
        // Passive power budget covers the BS transmit power only.
        RisMode::Passive => solution
            .columns
            .iter()
            .flat_map(|c| c.iter().map(|v| v.norm_sqr()))
            .sum(),
    };
    let amp_bound = match config.ris_mode {
        RisMode::Active => config.beta_max,
        RisMode::Passive => 1.0,
    };
    Ok(MetricReport {
        comm_residuals: user
            .iter()
            .zip(&config.gamma_c)
            .map(|(s, g)| s - g)
            .collect(),
        leakage_residuals: leak
            .iter()
            .zip(&config.gamma_t)
            .map(|(s, g)| g - s)
            .collect(),
        power_residual: config.p_max - power,
        amplitude_residuals: solution
            .theta
            .iter()
            .map(|t| amp_bound - t.norm())
            .collect(),
        user_sinr: user,
        leakage_sinr: leak,
        beampattern_gain: gain,
        total_power: power,
    })
}
