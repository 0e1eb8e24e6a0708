//! Named sampled-versus-analytic checks, runnable from the command line.

use std::f64::consts::TAU;

use rand::Rng;

use super::{build_model, stage_rng, Stage};
use crate::channel::LinkStats;
use crate::config::{AssociationMode, PilotAssignment, SimConfig};
use crate::deployment::NetworkGeometry;
use crate::error::{Error, Result};
use crate::linalg::{cn, CMat, CVec, C64, ONE};
use crate::power_control::{fpc_ul, ppa_dl};
use crate::spectral_efficiency::{fourth_moment_check, run_monte_carlo, McOptions, SeModel};

pub const ORACLES: [&str; 3] = ["fourth-moment", "uatf-dl", "uatf-ul"];

#[derive(Clone, Debug, PartialEq)]
pub struct OracleLine {
    pub label: String,
    pub sampled: f64,
    pub stderr: f64,
    pub analytic: f64,
}

impl OracleLine {
    /// Distance from the analytic value in standard errors.
    pub fn z(&self) -> f64 {
        (self.sampled - self.analytic).abs() / self.stderr
    }

    pub fn within(&self, k: f64) -> bool {
        (self.sampled - self.analytic).abs() <= k * self.stderr
    }
}

/// Three 2-antenna APs, two GUEs and two UAVs on two pilots, each GUE
/// sharing its pilot with one UAV, every AP serving every user.
pub fn oracle_fixture_config() -> SimConfig {
    SimConfig {
        area_side: 400.0,
        n_ap: 3,
        n_ap_antennas: 2,
        n_gue: 2,
        n_uav: 2,
        tau_p: 2,
        pilot_assignment: PilotAssignment::Fixed(vec![0, 1, 0, 1]),
        association: AssociationMode::Cf,
        ..SimConfig::default()
    }
}

pub fn oracle_fixture(seed: u64) -> Result<(NetworkGeometry, SeModel)> {
    build_model(&oracle_fixture_config(), seed)
}

fn random_link<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LinkStats {
    let k = 5.0 * rng.random::<f64>();
    LinkStats {
        beta: 0.5 + rng.random::<f64>(),
        rice_k: k,
        p_los: k / (k + 1.0),
        steering: CVec::from_fn(n, |q, _| if q == 0 { ONE } else { C64::from_polar(1.0, TAU * rng.random::<f64>()) }),
        los_phase: 0.0,
        shadow_db: 0.0,
        los: false,
    }
}

/// Five random 4×4 fixtures of `E|gᴴ D g|²`.
fn fourth_moment(samples: usize, seed: u64) -> Vec<OracleLine> {
    let mut rng = stage_rng(seed, Stage::MonteCarlo);
    (0..5)
        .map(|i| {
            let link = random_link(4, &mut rng);
            let d = CMat::from_fn(4, 4, |_, _| cn(&mut rng, 1.0));
            let (est, analytic) = fourth_moment_check(&link, &d, samples, &mut rng);
            OracleLine {
                label: format!("fixture {i} (K = {:.2})", link.rice_k),
                sampled: est.value,
                stderr: est.stderr,
                analytic,
            }
        })
        .collect()
}

fn uatf(dl: bool, samples: usize, seed: u64) -> Result<Vec<OracleLine>> {
    let (geometry, model) = oracle_fixture(seed)?;
    let cfg = oracle_fixture_config();
    let roles = geometry.roles();
    let eta = ppa_dl(&model.gamma_matrix(), &model.assoc, &roles, &vec![cfg.dl_power_budget_per_ap; cfg.n_ap], None)?;
    let p_max = vec![cfg.ul_power_max; roles.len()];
    let p = fpc_ul(&model.est, &model.assoc, &p_max, cfg.fpc_p0_watts(), cfg.power.fpc_alpha)?;
    let opts = McOptions {
        samples,
        batches: 50,
        literal_ub_no_log: false,
    };
    let mc = run_monte_carlo(&model, &eta, &p, &opts, &mut stage_rng(seed, Stage::MonteCarlo))?;
    (0..model.n_users())
        .map(|k| {
            let (sampled, analytic) = if dl {
                (mc.dl[k].se, model.se_lb_dl(k, &eta)?)
            } else {
                (mc.ul[k].se, model.se_lb_ul(k, &p)?)
            };
            Ok(OracleLine {
                label: format!("user {k} ({})", roles[k].as_str()),
                sampled: sampled.value,
                stderr: sampled.stderr,
                analytic,
            })
        })
        .collect()
}

/// Run a named oracle with `samples` draws.
pub fn run_oracle(name: &str, samples: usize, seed: u64) -> Result<Vec<OracleLine>> {
    match name {
        "fourth-moment" => Ok(fourth_moment(samples, seed)),
        "uatf-dl" => uatf(true, samples, seed),
        "uatf-ul" => uatf(false, samples, seed),
        other => Err(Error::config(
            "oracle",
            format!("unknown oracle `{other}` (expected one of {})", ORACLES.join(", ")),
        )),
    }
}
