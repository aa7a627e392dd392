//! Reproducible simulation scenes: node geometry, path losses, and seeded
//! Rician channel realizations, including the angle-parameterized RIS-target
//! channel used by the location-uncertainty experiment.
//!
//! All arrays (base station and RIS) are modeled as uniform planar arrays on
//! a `ceil(sqrt(n))`-wide grid with half-wavelength spacing by default, so
//! both azimuth and elevation steer the response. Channels are deterministic
//! functions of `(config, geometry, params, seed)`; the scattered parts are
//! drawn from one ChaCha stream in a fixed documented order (G row-major,
//! then each direct link, then each RIS-user link, then the RIS-target
//! link).

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RisMode {
    Passive,
    Active,
}

/// All scenario scalars, in linear units (watts, linear SINR thresholds).
/// dB values are converted once at the configuration boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas (L).
    pub bs_antennas: usize,
    /// Communication users (K).
    pub users: usize,
    /// Sensing streams (M).
    pub sensing_streams: usize,
    /// RIS elements (N).
    pub ris_elements: usize,
    /// Total power budget in watts.
    pub p_max: f64,
    /// Per-user communication SINR floor, linear.
    pub gamma_c: Vec<f64>,
    /// Per-user information-leakage ceiling at the target, linear.
    pub gamma_t: Vec<f64>,
    /// Per-user receiver noise power, watts.
    pub sigma2_user: Vec<f64>,
    /// Target receiver noise power, watts.
    pub sigma2_target: f64,
    /// RIS amplification (dynamic) noise power, watts; zero in passive mode.
    pub sigma2_ris: f64,
    /// Active-RIS per-element amplitude bound.
    pub beta_max: f64,
    pub ris_mode: RisMode,
    /// When false the BS-user direct links are zeroed.
    pub direct_links: bool,
    /// Passive-mode penalty weight; zero selects the automatic schedule.
    pub zeta: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: &str| Err(SceneError::BadConfig(msg.to_string()));
        if self.bs_antennas == 0 || self.users == 0 || self.sensing_streams == 0 {
            return bad("antenna, user, and stream counts must be positive");
        }
        if self.ris_elements == 0 {
            return bad("ris_elements must be positive");
        }
        if !(self.p_max > 0.0) {
            return bad("p_max must be > 0");
        }
        if self.gamma_c.len() != self.users
            || self.gamma_t.len() != self.users
            || self.sigma2_user.len() != self.users
        {
            return bad("per-user vectors must have length K");
        }
        if self.gamma_c.iter().any(|&g| !(g > 0.0)) || self.gamma_t.iter().any(|&g| !(g > 0.0)) {
            return bad("SINR and leakage thresholds must be > 0");
        }
        if self.sigma2_user.iter().any(|&s| !(s > 0.0)) || !(self.sigma2_target > 0.0) {
            return bad("noise powers must be > 0");
        }
        match self.ris_mode {
            RisMode::Passive => {
                if self.sigma2_ris != 0.0 {
                    return bad("passive mode requires sigma2_ris = 0");
                }
                if self.beta_max != 1.0 {
                    return bad("passive mode requires beta_max = 1");
                }
            }
            RisMode::Active => {
                if !(self.sigma2_ris > 0.0) {
                    return bad("active mode requires sigma2_ris > 0");
                }
                if !(self.beta_max >= 1.0) {
                    return bad("beta_max must be >= 1");
                }
            }
        }
        Ok(())
    }

    pub fn total_columns(&self) -> usize {
        self.users + self.sensing_streams
    }
}

/// Node layout in Cartesian meters plus the target direction as seen from
/// the RIS. The target enters only through its angles and range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub user_positions: Vec<[f64; 3]>,
    pub target_azimuth_deg: f64,
    pub target_elevation_deg: f64,
    pub target_range_m: f64,
}

impl SceneGeometry {
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut nodes = vec![self.bs_position, self.ris_position];
        nodes.extend(self.user_positions.iter().copied());
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if dist(nodes[i], nodes[j]) <= 1e-9 {
                    return Err(SceneError::DegenerateGeometry);
                }
            }
        }
        if !(self.target_range_m > 0.0) {
            return Err(SceneError::DegenerateGeometry);
        }
        Ok(())
    }
}

/// Path-loss and small-scale fading parameters, one exponent per link class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Rician factor in dB applied to every link; `inf` gives pure LoS.
    pub rician_factor_db: f64,
    /// Reference path loss at 1 m, dB (negative).
    pub pathloss_ref_db: f64,
    pub exp_bs_ris: f64,
    pub exp_bs_user: f64,
    pub exp_ris_user: f64,
    pub exp_ris_target: f64,
    /// Element spacing over wavelength for every array.
    pub element_spacing: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            rician_factor_db: 3.0,
            pathloss_ref_db: -30.0,
            exp_bs_ris: 2.2,
            exp_bs_user: 3.5,
            exp_ris_user: 2.8,
            exp_ris_target: 2.2,
            element_spacing: 0.5,
        }
    }
}

/// The four channel blocks of one realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSet {
    /// BS-RIS block, `ris_elements` rows by `bs_antennas` columns.
    pub g_mat: Vec<Vec<Complex64>>,
    /// BS-user rows, one length-L vector per user.
    pub h_direct: Vec<Vec<Complex64>>,
    /// RIS-user rows, one length-N vector per user.
    pub h_ris: Vec<Vec<Complex64>>,
    /// RIS-target row, length N.
    pub g_ris: Vec<Complex64>,
}

impl ChannelSet {
    pub fn num_ris(&self) -> usize {
        self.g_mat.len()
    }

    pub fn num_bs(&self) -> usize {
        self.g_mat.first().map_or(0, Vec::len)
    }

    pub fn num_users(&self) -> usize {
        self.h_direct.len()
    }

    pub fn max_abs_entry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for row in &self.g_mat {
            for v in row {
                m = m.max(v.norm());
            }
        }
        for set in [&self.h_direct, &self.h_ris] {
            for row in set {
                for v in row {
                    m = m.max(v.norm());
                }
            }
        }
        for v in &self.g_ris {
            m = m.max(v.norm());
        }
        m
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<(), SceneError> {
        let ok = self.g_mat.len() == cfg.ris_elements
            && self.g_mat.iter().all(|r| r.len() == cfg.bs_antennas)
            && self.h_direct.len() == cfg.users
            && self.h_direct.iter().all(|r| r.len() == cfg.bs_antennas)
            && self.h_ris.len() == cfg.users
            && self.h_ris.iter().all(|r| r.len() == cfg.ris_elements)
            && self.g_ris.len() == cfg.ris_elements;
        if ok {
            Ok(())
        } else {
            Err(SceneError::DimensionMismatch)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("channel serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        serde_json::from_str(text).map_err(|e| SceneError::BadConfig(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("degenerate geometry: coincident nodes or nonpositive range")]
    DegenerateGeometry,
    #[error("channel dimensions do not match the configuration")]
    DimensionMismatch,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn angles_between(from: [f64; 3], to: [f64; 3]) -> (f64, f64) {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let dz = to[2] - from[2];
    let az = dy.atan2(dx).to_degrees();
    let el = dz.atan2((dx * dx + dy * dy).sqrt()).to_degrees();
    (az, el)
}

/// Planar-array steering vector with unit-modulus entries. Element `p` sits
/// at grid position `(p % w, p / w)` with `w = ceil(sqrt(n))`; the phase
/// progression is `2*pi*spacing*(sin(az)cos(el)*ix + sin(el)*iy)`.
pub fn steering_vector(
    n_elements: usize,
    azimuth_deg: f64,
    elevation_deg: f64,
    spacing_over_wavelength: f64,
) -> Vec<Complex64> {
    let w = (n_elements as f64).sqrt().ceil() as usize;
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    let kx = 2.0 * std::f64::consts::PI * spacing_over_wavelength * az.sin() * el.cos();
    let ky = 2.0 * std::f64::consts::PI * spacing_over_wavelength * el.sin();
    (0..n_elements)
        .map(|p| {
            let ix = (p % w) as f64;
            let iy = (p / w) as f64;
            Complex64::from_polar(1.0, kx * ix + ky * iy)
        })
        .collect()
}

/// Linear path loss at distance `d` meters for the given exponent.
pub fn path_loss(params: &ChannelParams, d: f64, exponent: f64) -> f64 {
    10f64.powf(params.pathloss_ref_db / 10.0) * d.powf(-exponent)
}

fn rician_weights(rician_factor_db: f64) -> (f64, f64) {
    if rician_factor_db.is_infinite() && rician_factor_db > 0.0 {
        return (1.0, 0.0);
    }
    let kap = 10f64.powf(rician_factor_db / 10.0);
    ((kap / (1.0 + kap)).sqrt(), (1.0 / (1.0 + kap)).sqrt())
}

fn scatter(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws one channel realization. Deterministic for a fixed seed; each
/// entry's mean power equals the distance-based path loss of its link.
pub fn generate_channels(
    config: &SystemConfig,
    geometry: &SceneGeometry,
    params: &ChannelParams,
    seed: u64,
) -> Result<ChannelSet, SceneError> {
    config.validate()?;
    geometry.validate()?;
    if geometry.user_positions.len() != config.users {
        return Err(SceneError::BadConfig(
            "geometry must hold one position per user".into(),
        ));
    }

    let l = config.bs_antennas;
    let n = config.ris_elements;
    let sp = params.element_spacing;
    let (w_los, w_nlos) = rician_weights(params.rician_factor_db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // BS-RIS block: outer product of arrival and departure steering vectors.
    let d_br = dist(geometry.bs_position, geometry.ris_position);
    let amp_br = path_loss(params, d_br, params.exp_bs_ris).sqrt();
    let (az_bs_to_ris, el_bs_to_ris) = angles_between(geometry.bs_position, geometry.ris_position);
    let (az_ris_to_bs, el_ris_to_bs) = angles_between(geometry.ris_position, geometry.bs_position);
    let a_dep = steering_vector(l, az_bs_to_ris, el_bs_to_ris, sp);
    let a_arr = steering_vector(n, az_ris_to_bs, el_ris_to_bs, sp);
    let mut g_mat = Vec::with_capacity(n);
    for ni in 0..n {
        let mut row = Vec::with_capacity(l);
        for li in 0..l {
            let los = a_arr[ni] * a_dep[li].conj();
            row.push(amp_br * (w_los * los + w_nlos * scatter(&mut rng)));
        }
        g_mat.push(row);
    }

    // BS-user direct links.
    let mut h_direct = Vec::with_capacity(config.users);
    for u in &geometry.user_positions {
        let mut row = Vec::with_capacity(l);
        if config.direct_links {
            let d = dist(geometry.bs_position, *u);
            let amp = path_loss(params, d, params.exp_bs_user).sqrt();
            let (az, el) = angles_between(geometry.bs_position, *u);
            let a = steering_vector(l, az, el, sp);
            for li in 0..l {
                row.push(amp * (w_los * a[li].conj() + w_nlos * scatter(&mut rng)));
            }
        } else {
            // keep the rng stream aligned so toggling direct links does not
            // reshuffle the other blocks
            for _ in 0..l {
                let _ = scatter(&mut rng);
            }
            row.resize(l, Complex64::new(0.0, 0.0));
        }
        h_direct.push(row);
    }

    // RIS-user links.
    let mut h_ris = Vec::with_capacity(config.users);
    for u in &geometry.user_positions {
        let d = dist(geometry.ris_position, *u);
        let amp = path_loss(params, d, params.exp_ris_user).sqrt();
        let (az, el) = angles_between(geometry.ris_position, *u);
        let a = steering_vector(n, az, el, sp);
        let mut row = Vec::with_capacity(n);
        for ni in 0..n {
            row.push(amp * (w_los * a[ni].conj() + w_nlos * scatter(&mut rng)));
        }
        h_ris.push(row);
    }

    // RIS-target link from the configured angles.
    let amp_rt = path_loss(params, geometry.target_range_m, params.exp_ris_target).sqrt();
    let a_t = steering_vector(
        n,
        geometry.target_azimuth_deg,
        geometry.target_elevation_deg,
        sp,
    );
    let g_ris = (0..n)
        .map(|ni| amp_rt * (w_los * a_t[ni].conj() + w_nlos * scatter(&mut rng)))
        .collect();

    Ok(ChannelSet {
        g_mat,
        h_direct,
        h_ris,
        g_ris,
    })
}

/// Copy of the geometry with the target angles shifted; used to build
/// estimated-vs-true channel pairs for the uncertainty experiment.
pub fn perturb_target_angles(
    geometry: &SceneGeometry,
    delta_az_deg: f64,
    delta_el_deg: f64,
) -> SceneGeometry {
    let mut g = geometry.clone();
    g.target_azimuth_deg += delta_az_deg;
    g.target_elevation_deg += delta_el_deg;
    g
}

/// Documented desk-scale defaults: BS near the origin, RIS elevated nearby,
/// users clustered on a ring, target at (40 deg, -30 deg) from the RIS.
pub mod presets {
    use super::*;

    pub const DBM_NOISE_USER: f64 = -80.0;
    pub const DBM_NOISE_TARGET: f64 = -80.0;
    pub const DBM_NOISE_RIS: f64 = -70.0;

    pub fn dbm_to_watts(dbm: f64) -> f64 {
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn db_to_linear(db: f64) -> f64 {
        10f64.powf(db / 10.0)
    }

    /// Desk-scale system at `n` RIS elements: L = M = 4, K = 3,
    /// P_max = 40 dBm, Gamma_c = 10 dB, Gamma_t = 0 dB, beta_max = 4.
    pub fn desk_config(n: usize, mode: RisMode) -> SystemConfig {
        let users = 3;
        SystemConfig {
            bs_antennas: 4,
            users,
            sensing_streams: 4,
            ris_elements: n,
            p_max: dbm_to_watts(40.0),
            gamma_c: vec![db_to_linear(10.0); users],
            gamma_t: vec![db_to_linear(0.0); users],
            sigma2_user: vec![dbm_to_watts(DBM_NOISE_USER); users],
            sigma2_target: dbm_to_watts(DBM_NOISE_TARGET),
            sigma2_ris: match mode {
                RisMode::Passive => 0.0,
                RisMode::Active => dbm_to_watts(DBM_NOISE_RIS),
            },
            beta_max: match mode {
                RisMode::Passive => 1.0,
                RisMode::Active => 4.0,
            },
            ris_mode: mode,
            direct_links: true,
            zeta: 0.0,
        }
    }

    pub fn desk_geometry(users: usize) -> SceneGeometry {
        let center = [40.0, 0.0, 1.5];
        let radius = 3.0;
        let user_positions = (0..users)
            .map(|k| {
                let ang = std::f64::consts::TAU * k as f64 / users as f64;
                [
                    center[0] + radius * ang.cos(),
                    center[1] + radius * ang.sin(),
                    center[2],
                ]
            })
            .collect();
        SceneGeometry {
            bs_position: [0.0, 0.0, 3.0],
            ris_position: [30.0, 10.0, 6.0],
            user_positions,
            target_azimuth_deg: 40.0,
            target_elevation_deg: -30.0,
            target_range_m: 20.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steering_boresight_is_all_ones() {
        for v in steering_vector(4, 0.0, 0.0, 0.5) {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_two_elements_at_broadside_differ_by_pi() {
        let v = steering_vector(2, 90.0, 0.0, 0.5);
        let phase_diff = (v[1] / v[0]).arg();
        assert!((phase_diff.abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn steering_entries_always_unit_modulus() {
        for (az, el) in [(13.0, -71.0), (-140.0, 5.0), (359.0, 89.0)] {
            for v in steering_vector(9, az, el, 0.5) {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_channels_bit_for_bit() {
        let cfg = presets::desk_config(8, RisMode::Passive);
        let geo = presets::desk_geometry(cfg.users);
        let p = ChannelParams::default();
        let a = generate_channels(&cfg, &geo, &p, 42).unwrap();
        let b = generate_channels(&cfg, &geo, &p, 42).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_channels(&cfg, &geo, &p, 43).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn pure_los_limit_gives_constant_modulus_target_link() {
        let cfg = presets::desk_config(8, RisMode::Passive);
        let geo = presets::desk_geometry(cfg.users);
        let p = ChannelParams {
            rician_factor_db: f64::INFINITY,
            ..ChannelParams::default()
        };
        let ch = generate_channels(&cfg, &geo, &p, 7).unwrap();
        let expect = path_loss(&p, geo.target_range_m, p.exp_ris_target).sqrt();
        for v in &ch.g_ris {
            assert!((v.norm() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn perturbing_angles_shifts_only_the_target_link() {
        let cfg = presets::desk_config(8, RisMode::Passive);
        let geo = presets::desk_geometry(cfg.users);
        let p = ChannelParams::default();
        let base = generate_channels(&cfg, &geo, &p, 5).unwrap();

        let same = perturb_target_angles(&geo, 0.0, 0.0);
        assert_eq!(same.target_azimuth_deg, geo.target_azimuth_deg);
        assert_eq!(same.target_elevation_deg, geo.target_elevation_deg);

        let moved = perturb_target_angles(&geo, 2.5, -2.5);
        assert!((moved.target_azimuth_deg - 42.5).abs() < 1e-12);
        assert!((moved.target_elevation_deg - (-32.5)).abs() < 1e-12);
        let ch2 = generate_channels(&cfg, &moved, &p, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&base.g_mat).unwrap(),
            serde_json::to_string(&ch2.g_mat).unwrap()
        );
        let diff: f64 = base
            .g_ris
            .iter()
            .zip(&ch2.g_ris)
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(diff > 0.0);
    }

    #[test]
    fn empirical_entry_power_matches_link_budget() {
        // Monte-Carlo estimate of E|h_direct|^2 against the configured path
        // loss, and the 2^-alpha scaling under a doubled distance.
        let cfg = presets::desk_config(4, RisMode::Passive);
        let mut geo = presets::desk_geometry(cfg.users);
        geo.user_positions = vec![[20.0, 0.0, 1.5], [40.0, 0.0, 1.5], [10.0, 5.0, 1.5]];
        let p = ChannelParams::default();
        let mut acc = vec![0.0f64; cfg.users];
        let trials = 10_000;
        for seed in 0..trials {
            let ch = generate_channels(&cfg, &geo, &p, seed).unwrap();
            for k in 0..cfg.users {
                acc[k] += ch.h_direct[k].iter().map(|v| v.norm_sqr()).sum::<f64>()
                    / cfg.bs_antennas as f64;
            }
        }
        let mut means = vec![0.0f64; cfg.users];
        for k in 0..cfg.users {
            means[k] = acc[k] / trials as f64;
            let d = dist(geo.bs_position, geo.user_positions[k]);
            let expect = path_loss(&p, d, p.exp_bs_user);
            let rel = (means[k] - expect).abs() / expect;
            assert!(rel < 0.05, "user {k}: rel error {rel}");
        }
        // users 0 and 1 sit at 20 m and 40 m from the BS along nearly the
        // same ray: doubling distance scales mean power close to 2^-alpha
        let ratio = means[1] / means[0];
        let d0 = dist(geo.bs_position, geo.user_positions[0]);
        let d1 = dist(geo.bs_position, geo.user_positions[1]);
        let expect = (d1 / d0).powf(-p.exp_bs_user);
        assert!(
            (ratio - expect).abs() / expect < 0.1,
            "distance-scaling ratio {ratio} vs {expect}"
        );
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let cfg = presets::desk_config(4, RisMode::Passive);
        let mut geo = presets::desk_geometry(cfg.users);
        geo.ris_position = geo.bs_position;
        assert!(matches!(
            generate_channels(&cfg, &geo, &ChannelParams::default(), 1),
            Err(SceneError::DegenerateGeometry)
        ));
    }

    #[test]
    fn mode_invariants_enforced() {
        let mut cfg = presets::desk_config(4, RisMode::Passive);
        cfg.sigma2_ris = 1e-10;
        assert!(cfg.validate().is_err());
        let mut cfg = presets::desk_config(4, RisMode::Active);
        cfg.sigma2_ris = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn channel_set_json_round_trip() {
        let cfg = presets::desk_config(4, RisMode::Active);
        let geo = presets::desk_geometry(cfg.users);
        let ch = generate_channels(&cfg, &geo, &ChannelParams::default(), 9).unwrap();
        let back = ChannelSet::from_json(&ch.to_json()).unwrap();
        assert_eq!(ch.to_json(), back.to_json());
        assert!(back.check_dims(&cfg).is_ok());
    }
}
