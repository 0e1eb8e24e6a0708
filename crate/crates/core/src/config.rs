//! Simulation configuration.
//!
//! Every field has a default equal to the reference deployment (1 km² wrapped
//! square, 100 four-antenna APs, 48 GUEs and 12 UAVs at 1.9 GHz). The TOML
//! layout mirrors the struct nesting; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Side of the wrapped square, meters.
    pub area_side: f64,
    pub n_ap: usize,
    pub n_ap_antennas: usize,
    pub n_gue: usize,
    pub n_uav: usize,
    pub ap_height: f64,
    pub gue_height: f64,
    /// UAV heights are uniform over this range, meters.
    pub uav_height_range: [f64; 2],
    /// Hz.
    pub carrier_freq: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Antenna spacing in meters; half a wavelength when absent.
    pub antenna_spacing: Option<f64>,
    pub ula_orientation: UlaOrientation,
    /// Coherence block length in samples.
    pub tau_c: usize,
    /// Pilot length in samples.
    pub tau_p: usize,
    /// Downlink power budget per AP, W.
    pub dl_power_budget_per_ap: f64,
    /// Uplink power cap per user, W.
    pub ul_power_max: f64,
    /// Per-sample training power, W; the training energy is `tau_p` times this.
    pub train_power_per_sample: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub association: AssociationMode,
    pub pilot_assignment: PilotAssignment,
    pub seed: u64,
    pub channel: ChannelParams,
    pub estimation: EstimationOptions,
    pub power: PowerOptions,
    pub bounds: BoundOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UlaOrientation {
    /// Axis drawn uniformly in the horizontal plane per AP and drop.
    RandomHorizontal,
    /// Every array along the x axis.
    AlongX,
    /// Every array vertical.
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AssociationMode {
    /// Every AP serves every user.
    Cf,
    /// Each user is served by its `serving_aps` strongest APs.
    Uc { serving_aps: usize },
    /// Multi-cell baseline: each user attaches to its strongest BS.
    Mmimo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotAssignment {
    /// Uniform random pilot per user; collisions allowed.
    Random,
    /// Distinct pilots; requires `tau_p >= users`.
    OrthogonalForced,
    /// Explicit pilot index per user (GUEs first, then UAVs).
    Fixed(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosPhasePolicy {
    PerDraw,
    PerDrop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// GUE shadowing standard deviation, dB.
    pub sigma_sh_db: f64,
    /// Decorrelation distance of the user-side shadowing kernel, meters.
    pub shadow_decorrelation_m: f64,
    /// LOS probabilities are clamped to `1 - rice_eps` before forming the K-factor.
    pub rice_eps: f64,
    pub los_phase_policy: LosPhasePolicy,
    /// Apply shadowing to UAV links in the LOS branch too.
    pub uav_los_shadowing: bool,
    /// UAV LOS probability and path-loss constants. Required when UAVs are present.
    pub uav: Option<UavChannelModel>,
}

/// UAV LOS-probability and path-loss constants.
///
/// Defaults are the UMi-AV scenario of 3GPP TR 36.777 (tables B-1 and B-2).
/// The simulator treats them as opaque numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavChannelModel {
    pub source: String,
    pub los_probability: LosProbabilityModel,
    pub los: PathLossExpr,
    pub nlos: PathLossExpr,
    /// Floor the NLOS loss at the LOS loss.
    pub nlos_at_least_los: bool,
    pub los_shadow: ShadowSigma,
    pub nlos_shadow: ShadowSigma,
}

/// Piecewise LOS probability for aerial users.
///
/// For heights in `(min_height, max_height]`:
/// `p = 1` when `d2d <= d1`, otherwise `d1/d2d + exp(-d2d/p1) (1 - d1/d2d)` with
/// `p1 = p1_log_coeff log10(h) + p1_offset` and
/// `d1 = max(d1_log_coeff log10(h) + d1_offset, d1_min)`.
/// At or below `min_height` the terrestrial constants `low_d1`, `low_p1` apply.
/// Above `full_los_height`, when given, the link is always LOS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LosProbabilityModel {
    pub min_height: f64,
    pub max_height: f64,
    pub p1_log_coeff: f64,
    pub p1_offset: f64,
    pub d1_log_coeff: f64,
    pub d1_offset: f64,
    pub d1_min: f64,
    pub low_d1: f64,
    pub low_p1: f64,
    pub full_los_height: Option<f64>,
}

/// Path loss in dB:
/// `intercept + (distance_slope + height_slope log10 h) log10 d3d + freq_coeff log10 f_GHz`,
/// optionally floored at free-space loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossExpr {
    pub intercept: f64,
    pub distance_slope: f64,
    pub height_slope: f64,
    pub freq_coeff: f64,
    pub free_space_floor: bool,
}

/// Shadowing deviation `max(base_db * exp(-height_decay * h), floor_db)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowSigma {
    pub base_db: f64,
    pub height_decay: f64,
    pub floor_db: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationOptions {
    /// Multiply each training-interference term by an extra path gain.
    pub extra_gain_in_training: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DlStrategy {
    Ppa,
    Wfpa,
    Maxmin,
    /// Equal transmitted power per served user (multi-cell baseline).
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UlStrategy {
    Fpc,
    Maxmin,
    /// Every user at full power.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerOptions {
    pub dl: DlStrategy,
    pub ul: UlStrategy,
    /// UAV share of each AP's downlink budget.
    pub kappa: Option<f64>,
    pub fpc_p0_dbm: f64,
    pub fpc_alpha: f64,
    pub maxmin: MaxMinOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxMinOptions {
    /// Users per variable block; all users of an AP (or of the uplink) when absent.
    pub block_size: Option<usize>,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
    /// Duality-gap target of the block solver, in bits/s/Hz.
    pub solver_tol: f64,
    /// Drop the beamforming-uncertainty term from the surrogate denominator.
    pub surrogate_without_uncertainty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundOptions {
    /// Channel draws per drop for the sampled upper bound; 0 skips it.
    pub mc_samples: usize,
    /// Batches for the standard-error estimate.
    pub mc_batches: usize,
    /// Average `1 + SINR` instead of `log2(1 + SINR)`.
    pub literal_ub_no_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            area_side: 1000.0,
            n_ap: 100,
            n_ap_antennas: 4,
            n_gue: 48,
            n_uav: 12,
            ap_height: 10.0,
            gue_height: 1.65,
            uav_height_range: [22.5, 300.0],
            carrier_freq: 1.9e9,
            bandwidth: 20e6,
            antenna_spacing: None,
            ula_orientation: UlaOrientation::RandomHorizontal,
            tau_c: 200,
            tau_p: 32,
            dl_power_budget_per_ap: 0.2,
            ul_power_max: 0.1,
            train_power_per_sample: 0.1,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            association: AssociationMode::Uc { serving_aps: 10 },
            pilot_assignment: PilotAssignment::Random,
            seed: 1,
            channel: ChannelParams::default(),
            estimation: EstimationOptions::default(),
            power: PowerOptions::default(),
            bounds: BoundOptions::default(),
        }
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            sigma_sh_db: 4.0,
            shadow_decorrelation_m: 9.0,
            rice_eps: 1e-6,
            los_phase_policy: LosPhasePolicy::PerDraw,
            uav_los_shadowing: true,
            uav: Some(UavChannelModel::default()),
        }
    }
}

impl Default for UavChannelModel {
    fn default() -> Self {
        UavChannelModel {
            source: "3GPP TR 36.777 Annex B, UMi-AV (external constants)".into(),
            los_probability: LosProbabilityModel::default(),
            los: PathLossExpr {
                intercept: 30.9,
                distance_slope: 22.25,
                height_slope: -0.5,
                freq_coeff: 20.0,
                free_space_floor: true,
            },
            nlos: PathLossExpr {
                intercept: 32.4,
                distance_slope: 43.2,
                height_slope: -7.6,
                freq_coeff: 20.0,
                free_space_floor: false,
            },
            nlos_at_least_los: true,
            los_shadow: ShadowSigma {
                base_db: 5.0,
                height_decay: 0.01,
                floor_db: 2.0,
            },
            nlos_shadow: ShadowSigma {
                base_db: 8.0,
                height_decay: 0.0,
                floor_db: 8.0,
            },
        }
    }
}

impl Default for LosProbabilityModel {
    fn default() -> Self {
        LosProbabilityModel {
            min_height: 22.5,
            max_height: 300.0,
            p1_log_coeff: 233.98,
            p1_offset: -0.95,
            d1_log_coeff: 294.05,
            d1_offset: -432.94,
            d1_min: 18.0,
            low_d1: 18.0,
            low_p1: 36.0,
            full_los_height: None,
        }
    }
}

impl Default for PathLossExpr {
    fn default() -> Self {
        PathLossExpr {
            intercept: 0.0,
            distance_slope: 0.0,
            height_slope: 0.0,
            freq_coeff: 0.0,
            free_space_floor: false,
        }
    }
}

impl Default for ShadowSigma {
    fn default() -> Self {
        ShadowSigma {
            base_db: 0.0,
            height_decay: 0.0,
            floor_db: 0.0,
        }
    }
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            dl: DlStrategy::Ppa,
            ul: UlStrategy::Fpc,
            kappa: None,
            fpc_p0_dbm: -10.0,
            fpc_alpha: 0.5,
            maxmin: MaxMinOptions::default(),
        }
    }
}

impl Default for MaxMinOptions {
    fn default() -> Self {
        MaxMinOptions {
            block_size: None,
            outer_tol: 1e-4,
            max_outer: 50,
            inner_tol: 1e-4,
            max_inner: 20,
            solver_tol: 1e-7,
            surrogate_without_uncertainty: false,
        }
    }
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            mc_samples: 10_000,
            mc_batches: 50,
            literal_ub_no_log: false,
        }
    }
}

/// Named starting points for a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Full-scale reference deployment.
    Paper,
    /// 25 APs, 12 GUEs and 3 UAVs: small enough for a laptop.
    Desk,
    /// Four 100-antenna base stations on a 2×2 grid.
    Mmimo,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            "mmimo" => Ok(Preset::Mmimo),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (expected paper, desk or mmimo)"),
            )),
        }
    }
}

impl Preset {
    pub fn config(self) -> SimConfig {
        match self {
            Preset::Paper => SimConfig::default(),
            Preset::Desk => SimConfig::desk(),
            Preset::Mmimo => SimConfig::default().into_mmimo(),
        }
    }

    /// Drops a campaign runs when none are requested explicitly.
    pub fn default_drops(self) -> usize {
        match self {
            Preset::Paper | Preset::Mmimo => 100,
            Preset::Desk => 50,
        }
    }
}

impl SimConfig {
    /// Desk-scale deployment: 25 APs serving 12 GUEs and 3 UAVs.
    pub fn desk() -> Self {
        SimConfig {
            n_ap: 25,
            n_gue: 12,
            n_uav: 3,
            association: AssociationMode::Uc { serving_aps: 5 },
            bounds: BoundOptions {
                mc_samples: 2_000,
                ..BoundOptions::default()
            },
            ..SimConfig::default()
        }
    }

    /// Turn any deployment into the multi-cell baseline: four 100-antenna BSs
    /// on a 2×2 grid, 5 W each, single strongest-BS association, equal DL
    /// power per served user and fractional UL power control.
    pub fn into_mmimo(mut self) -> Self {
        self.n_ap = 4;
        self.n_ap_antennas = 100;
        self.dl_power_budget_per_ap = 5.0;
        self.association = AssociationMode::Mmimo;
        self.power.dl = DlStrategy::Uniform;
        self.power.ul = UlStrategy::Fpc;
        self.power.kappa = None;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, e.message().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_config(path)?)
    }

    /// Parse `text` as overrides on top of `base`: tables merge key by key,
    /// anything else (including tagged tables such as `association`) replaces.
    pub fn from_toml_str_over(base: &SimConfig, text: &str) -> Result<Self> {
        // parse on its own first so syntax errors point into the user's file
        Self::parse(text)?;
        let overlay: toml::Table = toml::from_str(text).map_err(|e| Error::config("<document>", e.message().to_string()))?;
        let mut merged = toml::Table::try_from(base).expect("config always serializes");
        merge_tables(&mut merged, overlay);
        let cfg: SimConfig = merged.try_into().map_err(|e: toml::de::Error| Error::config("<merged>", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file_over(base: &SimConfig, path: &Path) -> Result<Self> {
        Self::from_toml_str_over(base, &read_config(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn n_users(&self) -> usize {
        self.n_gue + self.n_uav
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn spacing(&self) -> f64 {
        self.antenna_spacing.unwrap_or(self.wavelength() / 2.0)
    }

    pub fn carrier_ghz(&self) -> f64 {
        self.carrier_freq / 1e9
    }

    /// Downlink data samples per coherence block.
    pub fn tau_d(&self) -> f64 {
        (self.tau_c - self.tau_p) as f64 / 2.0
    }

    /// Uplink data samples per coherence block.
    pub fn tau_u(&self) -> f64 {
        (self.tau_c - self.tau_p) as f64 / 2.0
    }

    /// Training energy `tau_p * train_power_per_sample`.
    pub fn train_power(&self) -> f64 {
        self.tau_p as f64 * self.train_power_per_sample
    }

    /// Thermal noise power in watts over the band, including the noise figure.
    pub fn noise_power(&self) -> f64 {
        noise_power_watts(self.noise_psd_dbm_hz, self.bandwidth, self.noise_figure_db)
    }

    pub fn fpc_p0_watts(&self) -> f64 {
        dbm_to_watts(self.fpc_p0())
    }

    fn fpc_p0(&self) -> f64 {
        self.power.fpc_p0_dbm
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        }
        positive("area_side", self.area_side)?;
        positive("carrier_freq", self.carrier_freq)?;
        positive("bandwidth", self.bandwidth)?;
        positive("dl_power_budget_per_ap", self.dl_power_budget_per_ap)?;
        positive("ul_power_max", self.ul_power_max)?;
        positive("train_power_per_sample", self.train_power_per_sample)?;
        positive("ap_height", self.ap_height)?;
        positive("gue_height", self.gue_height)?;
        if let Some(d) = self.antenna_spacing {
            positive("antenna_spacing", d)?;
        }
        if self.n_ap == 0 {
            return Err(Error::config("n_ap", "at least one AP is required"));
        }
        if self.n_ap_antennas == 0 {
            return Err(Error::config("n_ap_antennas", "must be at least 1"));
        }
        if self.n_users() == 0 {
            return Err(Error::config("n_gue", "at least one user is required"));
        }
        if self.tau_p == 0 {
            return Err(Error::config("tau_p", "must be at least 1"));
        }
        if self.tau_p >= self.tau_c {
            return Err(Error::config(
                "tau_p",
                format!("pilot length {} must be below tau_c = {}", self.tau_p, self.tau_c),
            ));
        }
        if !self.noise_psd_dbm_hz.is_finite() || !self.noise_figure_db.is_finite() {
            return Err(Error::config("noise_psd_dbm_hz", "noise parameters must be finite"));
        }
        let [lo, hi] = self.uav_height_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::config(
                "uav_height_range",
                format!("need 0 < low <= high, got [{lo}, {hi}]"),
            ));
        }
        if self.n_uav > 0 {
            let Some(uav) = &self.channel.uav else {
                return Err(Error::config(
                    "channel.uav",
                    "UAV channel constants are required when n_uav > 0",
                ));
            };
            let m = &uav.los_probability;
            if !(lo >= m.min_height && hi <= m.max_height) {
                return Err(Error::config(
                    "uav_height_range",
                    format!(
                        "[{lo}, {hi}] lies outside the UAV model validity range [{}, {}]",
                        m.min_height, m.max_height
                    ),
                ));
            }
        }
        match self.association {
            AssociationMode::Uc { serving_aps } if serving_aps == 0 || serving_aps > self.n_ap => {
                return Err(Error::config(
                    "association.serving_aps",
                    format!("must lie in 1..={}, got {serving_aps}", self.n_ap),
                ));
            }
            _ => {}
        }
        match &self.pilot_assignment {
            PilotAssignment::OrthogonalForced if self.n_users() > self.tau_p => {
                return Err(Error::config(
                    "pilot_assignment",
                    format!("{} users cannot have distinct pilots with tau_p = {}", self.n_users(), self.tau_p),
                ));
            }
            PilotAssignment::Fixed(v) => {
                if v.len() != self.n_users() {
                    return Err(Error::config(
                        "pilot_assignment",
                        format!("expected {} pilot indices, got {}", self.n_users(), v.len()),
                    ));
                }
                if let Some(bad) = v.iter().find(|&&p| p >= self.tau_p) {
                    return Err(Error::config(
                        "pilot_assignment",
                        format!("pilot index {bad} is not below tau_p = {}", self.tau_p),
                    ));
                }
            }
            _ => {}
        }
        let ch = &self.channel;
        if !(ch.sigma_sh_db >= 0.0 && ch.sigma_sh_db.is_finite()) {
            return Err(Error::config("channel.sigma_sh_db", "must be nonnegative"));
        }
        positive("channel.shadow_decorrelation_m", ch.shadow_decorrelation_m)?;
        if !(ch.rice_eps > 0.0 && ch.rice_eps < 1.0) {
            return Err(Error::config("channel.rice_eps", "must lie in (0, 1)"));
        }
        if let Some(k) = self.power.kappa {
            if !(0.0..=1.0).contains(&k) {
                return Err(Error::config("power.kappa", format!("must lie in [0, 1], got {k}")));
            }
        }
        if !(self.power.fpc_alpha >= 0.0 && self.power.fpc_alpha.is_finite()) {
            return Err(Error::config("power.fpc_alpha", "must be nonnegative"));
        }
        if !self.power.fpc_p0_dbm.is_finite() {
            return Err(Error::config("power.fpc_p0_dbm", "must be finite"));
        }
        let mm = &self.power.maxmin;
        if mm.block_size == Some(0) {
            return Err(Error::config("power.maxmin.block_size", "must be at least 1"));
        }
        positive("power.maxmin.outer_tol", mm.outer_tol)?;
        positive("power.maxmin.inner_tol", mm.inner_tol)?;
        positive("power.maxmin.solver_tol", mm.solver_tol)?;
        if mm.max_outer == 0 || mm.max_inner == 0 {
            return Err(Error::config("power.maxmin.max_outer", "iteration limits must be positive"));
        }
        if self.bounds.mc_samples > 0 {
            if self.bounds.mc_batches < 2 {
                return Err(Error::config("bounds.mc_batches", "need at least 2 batches"));
            }
            if self.bounds.mc_samples < self.bounds.mc_batches {
                return Err(Error::config(
                    "bounds.mc_samples",
                    "need at least one sample per batch",
                ));
            }
        }
        Ok(())
    }
}

fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("mode") => merge_tables(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// `psd + 10 log10(W) + nf` in dBm, converted to watts.
pub fn noise_power_watts(psd_dbm_hz: f64, bandwidth: f64, noise_figure_db: f64) -> f64 {
    dbm_to_watts(psd_dbm_hz + 10.0 * bandwidth.log10() + noise_figure_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_values() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tau_d(), 84.0);
        assert_eq!(c.tau_u(), 84.0);
        assert!((c.train_power() - 3.2).abs() < 1e-12);
        assert!((c.wavelength() - 0.157_785_5).abs() < 1e-6);
        // -174 + 73.01 + 9 = -91.99 dBm
        assert!((c.noise_power() / 6.3241e-13 - 1.0).abs() < 1e-3);
        assert!((c.fpc_p0_watts() - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn toml_round_trip() {
        let c = SimConfig::desk();
        let back = SimConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = SimConfig::from_toml_str(
            "n_ap = 9\n[association]\nmode = \"cf\"\n[power]\nkappa = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.n_ap, 9);
        assert_eq!(c.association, AssociationMode::Cf);
        assert_eq!(c.power.kappa, Some(0.2));
        assert_eq!(c.n_gue, 48);
    }

    #[test]
    fn bad_values_name_the_field() {
        let e = SimConfig::from_toml_str("tau_p = 300").unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "tau_p"), "{e}");
        let e = SimConfig::from_toml_str("[power]\nkappa = 1.5").unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "power.kappa"));
        let e = SimConfig::from_toml_str("[association]\nmode = \"uc\"\nserving_aps = 500").unwrap_err();
        assert!(e.is_config());
        assert!(SimConfig::from_toml_str("bogus_key = 1").unwrap_err().is_config());
    }

    #[test]
    fn missing_uav_model_is_a_config_error() {
        let mut c = SimConfig::desk();
        c.channel.uav = None;
        assert!(c.validate().unwrap_err().is_config());
        c.n_uav = 0;
        c.validate().unwrap();
    }

    #[test]
    fn overrides_merge_onto_a_preset() {
        let c = SimConfig::from_toml_str_over(&SimConfig::desk(), "n_ap = 8\n[power]\nkappa = 0.1\n").unwrap();
        assert_eq!((c.n_ap, c.n_gue), (8, 12));
        assert_eq!(c.power.kappa, Some(0.1));
        assert_eq!(c.power.fpc_alpha, 0.5);
        assert_eq!(c.association, AssociationMode::Uc { serving_aps: 5 });
        let c = SimConfig::from_toml_str_over(&SimConfig::desk(), "[association]\nmode = \"cf\"\n").unwrap();
        assert_eq!(c.association, AssociationMode::Cf);
        assert!(SimConfig::from_toml_str_over(&SimConfig::desk(), "n_ap = 2").unwrap_err().is_config());
        assert!(SimConfig::from_toml_str_over(&SimConfig::desk(), "nope = 2").unwrap_err().is_config());
    }

    #[test]
    fn mmimo_preset() {
        let c = Preset::Mmimo.config();
        assert_eq!((c.n_ap, c.n_ap_antennas), (4, 100));
        assert_eq!(c.dl_power_budget_per_ap, 5.0);
        assert_eq!(c.association, AssociationMode::Mmimo);
        c.validate().unwrap();
    }
}
