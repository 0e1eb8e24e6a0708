//! Result files: CDF tables, per-user rates, the run manifest and debug dumps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::stats::{cdf_table, Percentiles};
use super::{Bound, CampaignResult, Link};
use crate::config::SimConfig;
use crate::deployment::Role;
use crate::error::{Error, Result};

pub const RATES_FILE: &str = "rates.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (drop, user). Empty upper-bound cells mean the sampled bound was off.
pub fn write_rates_csv(result: &CampaignResult, path: &Path) -> Result<()> {
    let rows = result.drops.iter().flat_map(|d| {
        d.report.users.iter().map(move |u| {
            vec![
                d.report.drop_id.to_string(),
                d.report.seed.to_string(),
                u.user.to_string(),
                u.role.as_str().to_string(),
                u.dl_lb.to_string(),
                u.ul_lb.to_string(),
                opt(u.dl_ub.map(|e| e.value)),
                opt(u.dl_ub.map(|e| e.stderr)),
                opt(u.ul_ub.map(|e| e.value)),
                opt(u.ul_ub.map(|e| e.stderr)),
            ]
        })
    });
    write_rows(
        path,
        &[
            "drop",
            "seed",
            "user",
            "role",
            "dl_lb_bps",
            "ul_lb_bps",
            "dl_ub_bps",
            "dl_ub_stderr_bps",
            "ul_ub_bps",
            "ul_ub_stderr_bps",
        ],
        rows,
    )
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_version: &'static str,
    config: &'a SimConfig,
    master_seed: u64,
    seed_derivation: &'static str,
    n_drops: usize,
    drop_seeds: Vec<u64>,
    percentiles_bps: BTreeMap<String, Percentiles>,
    maxmin_status: Vec<BTreeMap<&'static str, String>>,
}

fn write_debug(result: &CampaignResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let beta = dir.join("beta.csv");
    write_rows(
        &beta,
        &["drop", "user", "ap", "beta", "rice_k", "p_los", "los", "shadow_db"],
        result.drops.iter().flat_map(|d| {
            let ls = &d.model.ls;
            (0..ls.n_users).flat_map(move |k| {
                (0..ls.n_aps).map(move |a| {
                    let l = ls.link(k, a);
                    vec![
                        d.report.drop_id.to_string(),
                        k.to_string(),
                        a.to_string(),
                        l.beta.to_string(),
                        l.rice_k.to_string(),
                        l.p_los.to_string(),
                        l.los.to_string(),
                        l.shadow_db.to_string(),
                    ]
                })
            })
        }),
    )?;
    let estimation = dir.join("estimation.csv");
    write_rows(
        &estimation,
        &["drop", "user", "ap", "pilot", "gamma", "dl_coefficient"],
        result.drops.iter().flat_map(|d| {
            let m = &d.model;
            (0..m.n_users()).flat_map(move |k| {
                m.assoc.serving_aps[k].iter().map(move |&a| {
                    vec![
                        d.report.drop_id.to_string(),
                        k.to_string(),
                        a.to_string(),
                        m.book.assignment[k].to_string(),
                        m.gamma(k, a).to_string(),
                        d.powers.dl[(k, a)].to_string(),
                    ]
                })
            })
        }),
    )?;
    let association = dir.join("association.csv");
    write_rows(
        &association,
        &["drop", "user", "role", "serving_aps", "ul_power_w"],
        result.drops.iter().flat_map(|d| {
            d.report.users.iter().map(move |u| {
                let aps: Vec<String> = d.model.assoc.serving_aps[u.user].iter().map(|a| a.to_string()).collect();
                vec![
                    d.report.drop_id.to_string(),
                    u.user.to_string(),
                    u.role.as_str().to_string(),
                    aps.join(";"),
                    d.powers.ul[u.user].to_string(),
                ]
            })
        }),
    )?;
    let trace = dir.join("solver_trace.csv");
    write_rows(
        &trace,
        &["drop", "link", "outer", "block", "inner", "min_se", "surrogate", "newton_steps", "accepted"],
        result.drops.iter().flat_map(|d| {
            d.solver_rows.iter().map(move |r| {
                vec![
                    d.report.drop_id.to_string(),
                    r.link.to_string(),
                    r.outer.to_string(),
                    r.block.to_string(),
                    r.inner.to_string(),
                    r.min_se.to_string(),
                    r.surrogate.to_string(),
                    r.newton_steps.to_string(),
                    r.accepted.to_string(),
                ]
            })
        }),
    )?;
    Ok(vec![beta, estimation, association, trace])
}

/// Write every output under `dir` and return the paths written.
pub fn emit(result: &CampaignResult, dir: &Path, debug: bool) -> Result<Vec<PathBuf>> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let mut percentiles = BTreeMap::new();
    for role in [Role::Gue, Role::Uav] {
        for link in Link::ALL {
            for bound in Bound::ALL {
                let samples = result.samples(role, link, bound);
                if samples.is_empty() {
                    continue;
                }
                let name = format!("{}_{}_{}", role.as_str(), link.as_str(), bound.as_str());
                let path = dir.join(format!("cdf_{name}.csv"));
                write_rows(
                    &path,
                    &["rate_bps", "cdf"],
                    cdf_table(&samples).into_iter().map(|(x, c)| [x.to_string(), c.to_string()]),
                )?;
                written.push(path);
                if let Some(p) = Percentiles::of_sorted(&samples) {
                    percentiles.insert(name, p);
                }
            }
        }
    }
    let rates = dir.join(RATES_FILE);
    write_rates_csv(result, &rates)?;
    written.push(rates);

    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &result.config,
        master_seed: result.master_seed,
        seed_derivation: "splitmix64(master ^ splitmix64(drop)); stages on ChaCha8 streams",
        n_drops: result.drops.len(),
        drop_seeds: result.drops.iter().map(|d| d.report.seed).collect(),
        percentiles_bps: percentiles,
        maxmin_status: result
            .drops
            .iter()
            .filter(|d| d.dl_trace.is_some() || d.ul_trace.is_some())
            .map(|d| {
                let mut m = BTreeMap::new();
                m.insert("drop", d.report.drop_id.to_string());
                if let Some((t, s)) = &d.dl_trace {
                    m.insert("dl", format!("{s:?} after {} sweeps", t.len() - 1));
                }
                if let Some((t, s)) = &d.ul_trace {
                    m.insert("ul", format!("{s:?} after {} sweeps", t.len() - 1));
                }
                m
            })
            .collect(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    fs::write(&path, text).map_err(io(&path))?;
    written.push(path);

    if debug {
        let ddir = dir.join("debug");
        fs::create_dir_all(&ddir).map_err(io(&ddir))?;
        written.extend(write_debug(result, &ddir)?);
    }
    Ok(written)
}
