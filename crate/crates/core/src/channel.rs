//! Large-scale fading, correlated shadowing and Ricean small-scale draws.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{PI, TAU};

use crate::config::{
    LosPhasePolicy, LosProbabilityModel, PathLossExpr, ShadowSigma, SimConfig, UavChannelModel,
};
use crate::deployment::{wrapped_distance, NetworkGeometry, Point3, Role};
use crate::error::{Error, Result};
use crate::linalg::{cn_vector, CMat, CVec, C64, ONE};

/// LOS probability of a link.
///
/// Ground users are always NLOS. For aerial users `h` is the user height and
/// `d2d` the horizontal distance to the AP.
pub fn los_probability(role: Role, d2d: f64, h: f64, model: &LosProbabilityModel) -> f64 {
    if role == Role::Gue {
        return 0.0;
    }
    if let Some(full) = model.full_los_height {
        if h > full {
            return 1.0;
        }
    }
    let (d1, p1) = if h <= model.min_height {
        (model.low_d1, model.low_p1)
    } else {
        let lh = h.log10();
        (
            (model.d1_log_coeff * lh + model.d1_offset).max(model.d1_min),
            model.p1_log_coeff * lh + model.p1_offset,
        )
    };
    if d2d <= d1 {
        1.0
    } else {
        let r = d1 / d2d;
        (r + (-d2d / p1).exp() * (1.0 - r)).clamp(0.0, 1.0)
    }
}

/// `K = p / (1 - p)` with `p` clamped to `1 - eps`.
pub fn rice_factor(p_los: f64, eps: f64) -> f64 {
    let p = p_los.clamp(0.0, 1.0 - eps);
    p / (1.0 - p)
}

/// Ground-user path gain: `-36.7 log10 d - 22.7 - 26 log10 f + z` dB, `f` in GHz.
pub fn path_gain_gue(d: f64, f_ghz: f64, shadow_db: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("path gain needs a positive distance, got {d}")));
    }
    let db = -36.7 * d.log10() - 22.7 - 26.0 * f_ghz.log10() + shadow_db;
    Ok(10f64.powf(db / 10.0))
}

/// Free-space loss in dB, `d` in meters and `f` in GHz.
pub fn free_space_loss_db(d: f64, f_ghz: f64) -> f64 {
    20.0 * (40.0 * PI * d * f_ghz / 3.0).log10()
}

fn expr_loss_db(e: &PathLossExpr, d: f64, h: f64, f_ghz: f64) -> f64 {
    let pl = e.intercept + (e.distance_slope + e.height_slope * h.log10()) * d.log10()
        + e.freq_coeff * f_ghz.log10();
    if e.free_space_floor {
        pl.max(free_space_loss_db(d, f_ghz))
    } else {
        pl
    }
}

/// UAV path loss in dB for the given LOS state.
pub fn uav_path_loss_db(d3d: f64, h: f64, los: bool, f_ghz: f64, model: &UavChannelModel) -> f64 {
    let los_pl = expr_loss_db(&model.los, d3d, h, f_ghz);
    if los {
        los_pl
    } else {
        let nlos = expr_loss_db(&model.nlos, d3d, h, f_ghz);
        if model.nlos_at_least_los {
            nlos.max(los_pl)
        } else {
            nlos
        }
    }
}

/// UAV path gain (linear) including shadowing.
pub fn path_gain_uav(
    d3d: f64,
    h: f64,
    los: bool,
    f_ghz: f64,
    model: &UavChannelModel,
    shadow_db: f64,
) -> Result<f64> {
    if !(d3d > 0.0) {
        return Err(Error::Domain(format!("path gain needs a positive distance, got {d3d}")));
    }
    Ok(10f64.powf((-uav_path_loss_db(d3d, h, los, f_ghz, model) + shadow_db) / 10.0))
}

pub fn shadow_sigma(s: &ShadowSigma, h: f64) -> f64 {
    (s.base_db * (-s.height_decay * h).exp()).max(s.floor_db)
}

/// Factor `C ≈ F Fᵀ` for a correlation matrix with unit diagonal.
///
/// Eigenvalues below `1e-10 λ_max` are clipped to zero and the rows of `F`
/// rescaled so the diagonal stays exactly one.
pub fn correlation_factor(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = corr.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = corr.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > 0.0) || lmin < -1e-3 * lmax {
        return Err(Error::Numerical(format!(
            "shadowing correlation is not positive semi-definite (eigenvalues in [{lmin:e}, {lmax:e}])"
        )));
    }
    let tol = 1e-10 * lmax;
    let roots = eig.eigenvalues.map(|l| if l > tol { l.sqrt() } else { 0.0 });
    let mut f = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    for i in 0..n {
        let norm = f.row(i).norm();
        if !(norm > 0.0) {
            return Err(Error::Numerical(format!(
                "shadowing factor row {i} vanished after eigenvalue clipping"
            )));
        }
        f.row_mut(i).scale_mut(1.0 / norm);
    }
    Ok(f)
}

/// User-side shadowing correlation `2^(-ρ/d0)` on wrapped 3D distances.
pub fn shadow_correlation(positions: &[Point3], area_side: f64, d0: f64) -> DMatrix<f64> {
    let n = positions.len();
    DMatrix::from_fn(n, n, |i, j| {
        let rho = wrapped_distance(&positions[i], &positions[j], area_side);
        2f64.powf(-rho / d0)
    })
}

/// Unit-variance shadowing field, users × APs: independent across APs and
/// correlated across users with the `2^(-ρ/d0)` kernel.
pub fn unit_shadow_field<R: Rng + ?Sized>(
    positions: &[Point3],
    area_side: f64,
    n_aps: usize,
    d0: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(d0 > 0.0) {
        return Err(Error::Domain("decorrelation distance must be positive".into()));
    }
    let f = correlation_factor(&shadow_correlation(positions, area_side, d0))?;
    let n = positions.len();
    let w = DMatrix::from_fn(n, n_aps, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(f * w)
}

/// Shadowing in dB with standard deviation `sigma_sh` on every link.
pub fn shadow_field<R: Rng + ?Sized>(
    geometry: &NetworkGeometry,
    sigma_sh: f64,
    d0: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(sigma_sh >= 0.0) {
        return Err(Error::Domain("shadowing deviation must be nonnegative".into()));
    }
    if sigma_sh == 0.0 {
        return Ok(DMatrix::zeros(geometry.n_users(), geometry.n_aps()));
    }
    let pos: Vec<Point3> = geometry.users.iter().map(|u| u.position).collect();
    Ok(unit_shadow_field(&pos, geometry.area_side, geometry.n_aps(), d0, rng)? * sigma_sh)
}

/// Array response toward `user`; entry 0 is always exactly 1.
pub fn steering_vector(antennas: &[Point3], user: &Point3, wavelength: f64) -> Result<CVec> {
    let dist = |p: &Point3| {
        ((p[0] - user[0]).powi(2) + (p[1] - user[1]).powi(2) + (p[2] - user[2]).powi(2)).sqrt()
    };
    let d: Vec<f64> = antennas.iter().map(dist).collect();
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("user coincides with an antenna".into()));
    }
    let k = TAU / wavelength;
    Ok(CVec::from_iterator(
        d.len(),
        d.iter().enumerate().map(|(l, &dl)| {
            if l == 0 {
                ONE
            } else {
                C64::from_polar(1.0, -k * (d[0] - dl))
            }
        }),
    ))
}

/// Statistics of one user-AP link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkStats {
    /// Linear path gain including shadowing.
    pub beta: f64,
    pub rice_k: f64,
    pub p_los: f64,
    pub steering: CVec,
    /// Per-drop LOS phase, used when the phase is not redrawn per block.
    pub los_phase: f64,
    pub shadow_db: f64,
    /// LOS state used for the path-loss branch.
    pub los: bool,
}

impl LinkStats {
    /// `β / (K + 1)`: the scattered-component power.
    pub fn scatter_power(&self) -> f64 {
        self.beta / (self.rice_k + 1.0)
    }
}

/// Per (user, AP) link statistics for one drop, stored user-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LargeScaleState {
    pub n_users: usize,
    pub n_aps: usize,
    pub n_antennas: usize,
    pub links: Vec<LinkStats>,
}

impl LargeScaleState {
    pub fn link(&self, k: usize, a: usize) -> &LinkStats {
        &self.links[k * self.n_aps + a]
    }

    pub fn link_mut(&mut self, k: usize, a: usize) -> &mut LinkStats {
        &mut self.links[k * self.n_aps + a]
    }

    pub fn beta(&self, k: usize, a: usize) -> f64 {
        self.link(k, a).beta
    }

    /// Users × APs matrix of linear path gains.
    pub fn beta_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_users, self.n_aps, |k, a| self.beta(k, a))
    }

    /// Keep only the listed users, in the given order.
    pub fn select_users(&self, users: &[usize]) -> LargeScaleState {
        let mut links = Vec::with_capacity(users.len() * self.n_aps);
        for &k in users {
            for a in 0..self.n_aps {
                links.push(self.link(k, a).clone());
            }
        }
        LargeScaleState {
            n_users: users.len(),
            n_aps: self.n_aps,
            n_antennas: self.n_antennas,
            links,
        }
    }
}

/// Path gains, K-factors, LOS states and steering vectors for every link.
pub fn build_large_scale<R: Rng + ?Sized>(
    geometry: &NetworkGeometry,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<LargeScaleState> {
    let n_users = geometry.n_users();
    let n_aps = geometry.n_aps();
    let pos: Vec<Point3> = geometry.users.iter().map(|u| u.position).collect();
    let ch = &cfg.channel;
    let field = unit_shadow_field(&pos, geometry.area_side, n_aps, ch.shadow_decorrelation_m, rng)?;
    let f_ghz = cfg.carrier_ghz();
    let lambda = cfg.wavelength();
    let mut links = Vec::with_capacity(n_users * n_aps);
    for (k, user) in geometry.users.iter().enumerate() {
        let h = user.position[2];
        for a in 0..n_aps {
            let d3 = geometry.distance(k, a);
            let image = geometry.user_image_near(k, a);
            let steering = steering_vector(&geometry.ap_antennas[a], &image, lambda)?;
            let los_phase = rng.random::<f64>() * TAU;
            let link = match user.role {
                Role::Gue => {
                    let z = ch.sigma_sh_db * field[(k, a)];
                    LinkStats {
                        beta: path_gain_gue(d3, f_ghz, z)?,
                        rice_k: 0.0,
                        p_los: 0.0,
                        steering,
                        los_phase,
                        shadow_db: z,
                        los: false,
                    }
                }
                Role::Uav => {
                    let model = ch.uav.as_ref().ok_or_else(|| {
                        Error::config("channel.uav", "UAV channel constants are required")
                    })?;
                    let p = los_probability(Role::Uav, geometry.distance_2d(k, a), h, &model.los_probability);
                    let los = rng.random::<f64>() < p;
                    let sigma = if los {
                        if ch.uav_los_shadowing {
                            shadow_sigma(&model.los_shadow, h)
                        } else {
                            0.0
                        }
                    } else {
                        shadow_sigma(&model.nlos_shadow, h)
                    };
                    let z = sigma * field[(k, a)];
                    LinkStats {
                        beta: path_gain_uav(d3, h, los, f_ghz, model, z)?,
                        rice_k: rice_factor(p, ch.rice_eps),
                        p_los: p,
                        steering,
                        los_phase,
                        shadow_db: z,
                        los,
                    }
                }
            };
            links.push(link);
        }
    }
    Ok(LargeScaleState {
        n_users,
        n_aps,
        n_antennas: cfg.n_ap_antennas,
        links,
    })
}

/// One small-scale draw of every link, stored user-major like [`LargeScaleState`].
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub n_aps: usize,
    pub g: Vec<CVec>,
    pub h: Vec<CVec>,
    pub phase: Vec<f64>,
}

impl ChannelRealization {
    pub fn g(&self, k: usize, a: usize) -> &CVec {
        &self.g[k * self.n_aps + a]
    }
}

/// Compose `sqrt(β/(K+1)) [sqrt(K) e^{jϑ} a + h]`.
pub fn compose_channel(link: &LinkStats, phase: f64, h: &CVec) -> CVec {
    let c = link.scatter_power().sqrt();
    let los = C64::from_polar(c * link.rice_k.sqrt(), phase);
    link.steering.map(|s| s * los) + h * C64::from(c)
}

/// Draw one realization of a single link.
pub fn draw_link<R: Rng + ?Sized>(
    link: &LinkStats,
    policy: LosPhasePolicy,
    rng: &mut R,
) -> (CVec, CVec, f64) {
    let h = cn_vector(rng, link.steering.len(), 1.0);
    let phase = match policy {
        LosPhasePolicy::PerDraw => rng.random::<f64>() * TAU,
        LosPhasePolicy::PerDrop => link.los_phase,
    };
    (compose_channel(link, phase, &h), h, phase)
}

pub fn draw_channel<R: Rng + ?Sized>(
    ls: &LargeScaleState,
    policy: LosPhasePolicy,
    rng: &mut R,
) -> ChannelRealization {
    let mut g = Vec::with_capacity(ls.links.len());
    let mut h = Vec::with_capacity(ls.links.len());
    let mut phase = Vec::with_capacity(ls.links.len());
    for link in &ls.links {
        let (gi, hi, p) = draw_link(link, policy, rng);
        g.push(gi);
        h.push(hi);
        phase.push(p);
    }
    ChannelRealization {
        n_aps: ls.n_aps,
        g,
        h,
        phase,
    }
}

/// `G = β/(K+1) [K a aᴴ + I]`.
pub fn covariance_g(beta: f64, rice_k: f64, steering: &CVec) -> CMat {
    let n = steering.len();
    let c = beta / (rice_k + 1.0);
    let mut g = steering * steering.adjoint() * C64::from(c * rice_k);
    for i in 0..n {
        g[(i, i)] += c;
    }
    g
}

/// Users × APs matrix of shadowing values in dB.
pub fn shadow_db_matrix(ls: &LargeScaleState) -> DMatrix<f64> {
    DMatrix::from_fn(ls.n_users, ls.n_aps, |k, a| ls.link(k, a).shadow_db)
}
