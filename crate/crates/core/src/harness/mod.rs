//! Drop and campaign orchestration.
//!
//! A drop runs topology, large-scale fading, pilots, estimation, association,
//! power control and the bounds from one 64-bit seed. Each stage draws from
//! its own ChaCha stream of that seed, so changing, say, the Monte-Carlo
//! sample count never moves a user.

mod oracle;
mod output;
mod stats;

pub use oracle::{oracle_fixture, oracle_fixture_config, run_oracle, OracleLine, ORACLES};
pub use output::{emit, write_rates_csv, MANIFEST_FILE, RATES_FILE};
pub use stats::{cdf_table, percentile, Percentiles};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::association::associate;
use crate::channel::build_large_scale;
use crate::config::{DlStrategy, SimConfig, UlStrategy};
use crate::deployment::{generate_topology, NetworkGeometry, Role};
use crate::error::{Error, Result};
use crate::estimation::{assign_pilots, build_estimation};
use crate::power_control::{fpc_ul, maxmin_dl, maxmin_ul, ppa_dl, uniform_dl, wfpa_dl, MaxMinStatus, PowerAllocation, TraceRow};
use crate::spectral_efficiency::{run_monte_carlo, se_to_rate, Estimate, Frame, McOptions, SeModel};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of drop `i` under master seed `master`.
pub fn drop_seed(master: u64, i: usize) -> u64 {
    mix(master ^ mix(i as u64))
}

/// Random streams within a drop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Topology = 0,
    LargeScale = 1,
    Pilots = 2,
    MonteCarlo = 3,
}

pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Dl,
    Ul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Closed-form lower bound.
    Lb,
    /// Sampled upper bound.
    Ub,
}

impl Link {
    pub const ALL: [Link; 2] = [Link::Dl, Link::Ul];

    pub fn as_str(self) -> &'static str {
        match self {
            Link::Dl => "dl",
            Link::Ul => "ul",
        }
    }
}

impl Bound {
    pub const ALL: [Bound; 2] = [Bound::Lb, Bound::Ub];

    pub fn as_str(self) -> &'static str {
        match self {
            Bound::Lb => "lb",
            Bound::Ub => "ub",
        }
    }
}

/// Rates of one user in one drop, in bit/s.
#[derive(Clone, Debug, PartialEq)]
pub struct UserRates {
    pub user: usize,
    pub role: Role,
    pub dl_lb: f64,
    pub ul_lb: f64,
    /// Absent when the sampled bound is switched off.
    pub dl_ub: Option<Estimate>,
    pub ul_ub: Option<Estimate>,
}

impl UserRates {
    pub fn rate(&self, link: Link, bound: Bound) -> Option<f64> {
        match (link, bound) {
            (Link::Dl, Bound::Lb) => Some(self.dl_lb),
            (Link::Ul, Bound::Lb) => Some(self.ul_lb),
            (Link::Dl, Bound::Ub) => self.dl_ub.map(|e| e.value),
            (Link::Ul, Bound::Ub) => self.ul_ub.map(|e| e.value),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub drop_id: usize,
    pub seed: u64,
    pub users: Vec<UserRates>,
}

/// Everything a drop produced, for the debug files and for tests that need
/// to recompute rates.
#[derive(Clone, Debug)]
pub struct DropOutcome {
    pub report: RateReport,
    pub geometry: NetworkGeometry,
    pub model: SeModel,
    pub powers: PowerAllocation,
    /// Max-min traces, when a max-min strategy ran.
    pub dl_trace: Option<(Vec<f64>, MaxMinStatus)>,
    pub ul_trace: Option<(Vec<f64>, MaxMinStatus)>,
    pub solver_rows: Vec<TraceRow>,
}

/// Topology through estimation and association, without powers.
pub fn build_model(cfg: &SimConfig, seed: u64) -> Result<(NetworkGeometry, SeModel)> {
    cfg.validate()?;
    let geometry = generate_topology(cfg, &mut stage_rng(seed, Stage::Topology))?;
    let ls = build_large_scale(&geometry, cfg, &mut stage_rng(seed, Stage::LargeScale))?;
    let n = geometry.n_users();
    let book = assign_pilots(n, cfg.tau_p, &cfg.pilot_assignment, &mut stage_rng(seed, Stage::Pilots))?;
    let noise = cfg.noise_power();
    let est = build_estimation(&ls, &book, &vec![cfg.train_power(); n], noise, cfg.estimation.extra_gain_in_training)?;
    let assoc = associate(cfg.association, &ls.beta_matrix())?;
    let model = SeModel::new(
        ls,
        est,
        book,
        assoc,
        noise,
        Frame::from_config(cfg),
        cfg.bandwidth,
        cfg.channel.los_phase_policy,
    )?;
    Ok((geometry, model))
}

struct Powers {
    alloc: PowerAllocation,
    dl_trace: Option<(Vec<f64>, MaxMinStatus)>,
    ul_trace: Option<(Vec<f64>, MaxMinStatus)>,
    rows: Vec<TraceRow>,
}

fn allocate(cfg: &SimConfig, model: &SeModel, roles: &[Role]) -> Result<Powers> {
    let p = &cfg.power;
    let gamma = model.gamma_matrix();
    let budgets = vec![cfg.dl_power_budget_per_ap; model.n_aps()];
    let p_max = vec![cfg.ul_power_max; model.n_users()];
    let mut rows = Vec::new();
    let (dl, dl_trace): (DMatrix<f64>, _) = match p.dl {
        DlStrategy::Ppa => (ppa_dl(&gamma, &model.assoc, roles, &budgets, p.kappa)?, None),
        DlStrategy::Wfpa => (wfpa_dl(&gamma, &model.assoc, roles, &budgets, model.sigma_z2, p.kappa)?, None),
        DlStrategy::Uniform => (uniform_dl(&gamma, &model.assoc, roles, &budgets, p.kappa)?, None),
        DlStrategy::Maxmin => {
            let out = maxmin_dl(model, roles, &budgets, p.kappa, &p.maxmin)?;
            rows.extend(out.rows);
            (out.powers, Some((out.trace, out.status)))
        }
    };
    let fpc = || fpc_ul(&model.est, &model.assoc, &p_max, cfg.fpc_p0_watts(), p.fpc_alpha);
    let (ul, ul_trace) = match p.ul {
        UlStrategy::Fpc => (fpc()?, None),
        UlStrategy::Full => (p_max.clone(), None),
        UlStrategy::Maxmin => {
            let out = maxmin_ul(model, &p_max, &fpc()?, &p.maxmin)?;
            rows.extend(out.rows);
            (out.powers, Some((out.trace, out.status)))
        }
    };
    let alloc = PowerAllocation {
        dl,
        ul,
        dl_budgets: budgets,
        ul_max: p_max,
        kappa: p.kappa,
    };
    alloc.check(&gamma, &model.assoc, roles)?;
    Ok(Powers {
        alloc,
        dl_trace,
        ul_trace,
        rows,
    })
}

fn run_drop_inner(cfg: &SimConfig, drop_id: usize, seed: u64) -> Result<DropOutcome> {
    let (geometry, model) = build_model(cfg, seed)?;
    let roles = geometry.roles();
    let powers = allocate(cfg, &model, &roles)?;
    let (eta, p) = (&powers.alloc.dl, &powers.alloc.ul);
    let dl = model.se_lb_dl_all(eta)?;
    let ul = model.se_lb_ul_all(p)?;
    let mc = if cfg.bounds.mc_samples > 0 {
        let opts = McOptions {
            samples: cfg.bounds.mc_samples,
            batches: cfg.bounds.mc_batches,
            literal_ub_no_log: cfg.bounds.literal_ub_no_log,
        };
        Some(run_monte_carlo(&model, eta, p, &opts, &mut stage_rng(seed, Stage::MonteCarlo))?)
    } else {
        None
    };
    let w = cfg.bandwidth;
    let to_rate = |e: &Estimate| Estimate {
        value: se_to_rate(e.value, w),
        stderr: se_to_rate(e.stderr, w),
    };
    let users = (0..model.n_users())
        .map(|k| UserRates {
            user: k,
            role: roles[k],
            dl_lb: se_to_rate(dl[k], w),
            ul_lb: se_to_rate(ul[k], w),
            dl_ub: mc.as_ref().map(|m| to_rate(&m.dl_ub[k])),
            ul_ub: mc.as_ref().map(|m| to_rate(&m.ul_ub[k])),
        })
        .collect();
    Ok(DropOutcome {
        report: RateReport { drop_id, seed, users },
        geometry,
        model,
        powers: powers.alloc,
        dl_trace: powers.dl_trace,
        ul_trace: powers.ul_trace,
        solver_rows: powers.rows,
    })
}

/// Run one drop end to end. Failures carry the drop id and seed.
pub fn run_drop(cfg: &SimConfig, drop_id: usize, seed: u64) -> Result<DropOutcome> {
    run_drop_inner(cfg, drop_id, seed).map_err(|e| Error::Drop {
        drop_id,
        seed,
        source: Box::new(e),
    })
}

#[derive(Clone, Debug)]
pub struct CampaignResult {
    pub config: SimConfig,
    pub master_seed: u64,
    /// In drop order, whatever the thread count.
    pub drops: Vec<DropOutcome>,
}

impl CampaignResult {
    /// Rates of every user of `role` across drops, sorted ascending.
    pub fn samples(&self, role: Role, link: Link, bound: Bound) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .drops
            .iter()
            .flat_map(|d| d.report.users.iter())
            .filter(|u| u.role == role)
            .filter_map(|u| u.rate(link, bound))
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn percentiles(&self, role: Role, link: Link, bound: Bound) -> Option<Percentiles> {
        Percentiles::of_sorted(&self.samples(role, link, bound))
    }
}

/// Run `n_drops` drops on `jobs` threads. Output does not depend on `jobs`.
pub fn run_campaign(cfg: &SimConfig, n_drops: usize, jobs: usize) -> Result<CampaignResult> {
    if n_drops == 0 {
        return Err(Error::config("drops", "at least one drop is required"));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let drops = pool.install(|| {
        (0..n_drops)
            .into_par_iter()
            .map(|i| run_drop(cfg, i, drop_seed(cfg.seed, i)))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CampaignResult {
        config: cfg.clone(),
        master_seed: cfg.seed,
        drops,
    })
}
