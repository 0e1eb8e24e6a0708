//! Block-coordinate max-min power control.
//!
//! Each block is a set of power variables sharing one budget. A block update
//! solves the concave surrogate subproblem around the current point and is
//! kept only if the true smallest spectral efficiency does not drop, so the
//! recorded trace is non-decreasing even where the surrogate fails to
//! minorize (negative pilot-contamination cross terms).

use nalgebra::DMatrix;
use serde::Serialize;

use super::solver::{solve_block_subproblem, Domain};
use super::surrogate::{dl_block_forms, ul_affine_forms, BlockVar, ConcaveRate, SeparableForm, UlLinearModel};
use super::{power_classes, ppa_dl};
use crate::config::MaxMinOptions;
use crate::deployment::Role;
use crate::error::{Error, Result};
use crate::spectral_efficiency::SeModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxMinStatus {
    Converged,
    /// The outer loop hit its cap; the best point found is returned.
    IterationLimit,
}

/// One block update, for the solver-trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub link: &'static str,
    pub outer: usize,
    pub block: usize,
    pub inner: usize,
    /// Smallest closed-form spectral efficiency after the step.
    pub min_se: f64,
    /// Optimal value of the surrogate subproblem.
    pub surrogate: f64,
    pub newton_steps: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxMinOutcome<P> {
    pub powers: P,
    /// Smallest spectral efficiency at the start and after every outer sweep.
    pub trace: Vec<f64>,
    pub status: MaxMinStatus,
    pub rows: Vec<TraceRow>,
}

struct Driver<'a, P> {
    link: &'static str,
    n_blocks: usize,
    domain: Domain,
    opts: &'a MaxMinOptions,
    min_se: &'a dyn Fn(&P) -> Result<f64>,
    /// Surrogates and anchor for a block, or `None` when it has nothing to move.
    surrogate: &'a dyn Fn(&P, usize) -> Result<Option<(Vec<ConcaveRate>, Vec<f64>)>>,
    apply: &'a dyn Fn(&P, usize, &[f64]) -> P,
}

impl<P: Clone> Driver<'_, P> {
    fn run(&self, init: P) -> Result<MaxMinOutcome<P>> {
        let mut powers = init;
        let mut cur = (self.min_se)(&powers)?;
        let mut trace = vec![cur];
        let mut rows = Vec::new();
        let mut status = MaxMinStatus::IterationLimit;
        for outer in 1..=self.opts.max_outer {
            let start = cur;
            for block in 0..self.n_blocks {
                for inner in 0..self.opts.max_inner {
                    let Some((rates, x0)) = (self.surrogate)(&powers, block)? else { break };
                    let sol = solve_block_subproblem(&rates, &x0, self.domain, self.opts.solver_tol)?;
                    let mut row = TraceRow {
                        link: self.link,
                        outer,
                        block,
                        inner,
                        min_se: cur,
                        surrogate: sol.t,
                        newton_steps: sol.newton_steps,
                        accepted: false,
                    };
                    if !sol.improved {
                        rows.push(row);
                        break;
                    }
                    let candidate = (self.apply)(&powers, block, &sol.x);
                    let value = (self.min_se)(&candidate)?;
                    if value < cur {
                        rows.push(row);
                        break;
                    }
                    row.accepted = true;
                    row.min_se = value;
                    rows.push(row);
                    let gain = value - cur;
                    powers = candidate;
                    cur = value;
                    if gain <= self.opts.inner_tol * cur {
                        break;
                    }
                }
            }
            trace.push(cur);
            if cur - start <= self.opts.outer_tol * start {
                status = MaxMinStatus::Converged;
                break;
            }
        }
        if status == MaxMinStatus::IterationLimit {
            log::warn!("{} max-min stopped after {} sweeps", self.link, self.opts.max_outer);
        }
        Ok(MaxMinOutcome {
            powers,
            trace,
            status,
            rows,
        })
    }
}

fn min_of(values: impl IntoIterator<Item = Result<f64>>) -> Result<f64> {
    let mut m = f64::INFINITY;
    for v in values {
        m = m.min(v?);
    }
    Ok(m)
}

fn rates_from(forms: Vec<(SeparableForm, SeparableForm)>, x0: &[f64], prelog: f64) -> Result<Vec<ConcaveRate>> {
    forms
        .into_iter()
        .map(|(num, den)| {
            if !(den.value(x0) > 0.0) {
                return Err(Error::Numerical("surrogate denominator is not positive at the anchor".into()));
            }
            Ok(ConcaveRate::new(&num, &den, x0, prelog))
        })
        .collect()
}

struct DlBlock {
    ap: usize,
    class: usize,
    users: Vec<usize>,
}

/// Max-min downlink coefficients, starting from proportional allocation.
///
/// One block per budget class (AP, or AP and role under `κ`), split into
/// chunks of `block_size` users when set.
pub fn maxmin_dl(model: &SeModel, roles: &[Role], budgets: &[f64], kappa: Option<f64>, opts: &MaxMinOptions) -> Result<MaxMinOutcome<DMatrix<f64>>> {
    let gamma = model.gamma_matrix();
    let init = ppa_dl(&gamma, &model.assoc, roles, budgets, kappa)?;
    let classes = power_classes(&model.assoc, roles, budgets, kappa)?;
    let mut blocks = Vec::new();
    for (ci, c) in classes.iter().enumerate() {
        let active: Vec<usize> = c.users.iter().copied().filter(|&k| gamma[(k, c.ap)] > 0.0).collect();
        let size = opts.block_size.unwrap_or(active.len()).max(1);
        for chunk in active.chunks(size) {
            blocks.push(DlBlock {
                ap: c.ap,
                class: ci,
                users: chunk.to_vec(),
            });
        }
    }
    let prelog = model.frame.dl_prelog();
    let min_se = |eta: &DMatrix<f64>| min_of((0..model.n_users()).map(|k| model.se_lb_dl(k, eta)));
    let block_budget = |eta: &DMatrix<f64>, b: &DlBlock| {
        let class = &classes[b.class];
        let others: f64 = class
            .users
            .iter()
            .filter(|u| !b.users.contains(u))
            .map(|&u| eta[(u, b.ap)] * gamma[(u, b.ap)])
            .sum();
        class.budget - others
    };
    let vars_of = |eta: &DMatrix<f64>, b: &DlBlock| -> Option<Vec<BlockVar>> {
        let budget = block_budget(eta, b);
        (budget > 0.0).then(|| {
            b.users
                .iter()
                .map(|&u| BlockVar {
                    user: u,
                    ap: b.ap,
                    scale: budget / gamma[(u, b.ap)],
                })
                .collect()
        })
    };
    let surrogate = |eta: &DMatrix<f64>, bi: usize| -> Result<Option<(Vec<ConcaveRate>, Vec<f64>)>> {
        let Some(vars) = vars_of(eta, &blocks[bi]) else { return Ok(None) };
        let x0: Vec<f64> = vars.iter().map(|v| eta[(v.user, v.ap)] / v.scale).collect();
        let forms = dl_block_forms(model, eta, &vars, opts.surrogate_without_uncertainty);
        Ok(Some((rates_from(forms, &x0, prelog)?, x0)))
    };
    let apply = |eta: &DMatrix<f64>, bi: usize, x: &[f64]| {
        let mut out = eta.clone();
        if let Some(vars) = vars_of(eta, &blocks[bi]) {
            for (v, &xi) in vars.iter().zip(x) {
                out[(v.user, v.ap)] = v.scale * xi.max(0.0);
            }
        }
        out
    };
    Driver {
        link: "dl",
        n_blocks: blocks.len(),
        domain: Domain::Simplex,
        opts,
        min_se: &min_se,
        surrogate: &surrogate,
        apply: &apply,
    }
    .run(init)
}

/// Max-min uplink powers within `0 ≤ p ≤ p_max`, starting from `init`.
pub fn maxmin_ul(model: &SeModel, p_max: &[f64], init: &[f64], opts: &MaxMinOptions) -> Result<MaxMinOutcome<Vec<f64>>> {
    let nu = model.n_users();
    if p_max.len() != nu || init.len() != nu {
        return Err(Error::Domain("power vectors do not match the user count".into()));
    }
    let lin = UlLinearModel::new(model);
    let prelog = model.frame.ul_prelog();
    let active: Vec<usize> = (0..nu).filter(|&k| p_max[k] > 0.0).collect();
    let size = opts.block_size.unwrap_or(active.len()).max(1);
    let blocks: Vec<Vec<usize>> = active.chunks(size).map(<[usize]>::to_vec).collect();
    let min_se = |p: &Vec<f64>| {
        min_of((0..nu).map(|k| {
            let sinr = lin.sinr(k, p);
            if sinr.is_finite() && sinr >= 0.0 {
                Ok(prelog * (1.0 + sinr).log2())
            } else {
                Err(Error::Numerical(format!("uplink SINR of user {k} is {sinr}")))
            }
        }))
    };
    let surrogate = |p: &Vec<f64>, bi: usize| -> Result<Option<(Vec<ConcaveRate>, Vec<f64>)>> {
        let users = &blocks[bi];
        let scale: Vec<f64> = users.iter().map(|&u| p_max[u]).collect();
        let x0: Vec<f64> = users.iter().map(|&u| p[u] / p_max[u]).collect();
        let forms = ul_affine_forms(&lin, p, users, &scale);
        Ok(Some((rates_from(forms, &x0, prelog)?, x0)))
    };
    let apply = |p: &Vec<f64>, bi: usize, x: &[f64]| {
        let mut out = p.clone();
        for (&u, &xi) in blocks[bi].iter().zip(x) {
            out[u] = p_max[u] * xi.clamp(0.0, 1.0);
        }
        out
    };
    Driver {
        link: "ul",
        n_blocks: blocks.len(),
        domain: Domain::Box,
        opts,
        min_se: &min_se,
        surrogate: &surrogate,
        apply: &apply,
    }
    .run(init.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::associate_cf;
    use crate::power_control::{class_power, fpc_ul};
    use crate::test_support::Fixture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn opts() -> MaxMinOptions {
        MaxMinOptions::default()
    }

    fn random_model(seed: u64, users: usize, aps: usize, pilots: Vec<usize>, tau_p: usize) -> SeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Fixture::new(users, aps, pilots, tau_p).build(associate_cf(aps, users), &mut rng)
    }

    #[test]
    fn single_user_takes_the_whole_budget() {
        let model = random_model(1, 1, 2, vec![0], 1);
        let out = maxmin_dl(&model, &[Role::Gue], &[1.0, 1.0], None, &opts()).unwrap();
        let gamma = model.gamma_matrix();
        for a in 0..2 {
            let used = class_power(&out.powers, &gamma, &[0], a);
            assert!(used > 1.0 - 1e-5 && used <= 1.0 + 1e-12, "{used}");
        }
        let ul = maxmin_ul(&model, &[0.1], &[0.03], &opts()).unwrap();
        assert!((ul.powers[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn dominates_the_initial_rules_with_monotone_traces() {
        for seed in 0..4 {
            let model = random_model(10 + seed, 4, 3, vec![0, 1, 0, 1], 2);
            let roles = [Role::Gue, Role::Gue, Role::Uav, Role::Uav];
            let budgets = [1.0; 3];
            for kappa in [None, Some(0.2)] {
                let out = maxmin_dl(&model, &roles, &budgets, kappa, &opts()).unwrap();
                let ppa = ppa_dl(&model.gamma_matrix(), &model.assoc, &roles, &budgets, kappa).unwrap();
                let base = min_of((0..4).map(|k| model.se_lb_dl(k, &ppa))).unwrap();
                assert!(out.trace[0] == base);
                assert!(*out.trace.last().unwrap() >= base * (1.0 - 1e-12));
                assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
                let gamma = model.gamma_matrix();
                for c in power_classes(&model.assoc, &roles, &budgets, kappa).unwrap() {
                    assert!(class_power(&out.powers, &gamma, &c.users, c.ap) <= c.budget * (1.0 + 1e-9));
                }
            }
            let p_max = vec![0.1; 4];
            let fpc = fpc_ul(&model.est, &model.assoc, &p_max, 0.01, 0.5).unwrap();
            let out = maxmin_ul(&model, &p_max, &fpc, &opts()).unwrap();
            let base = min_of((0..4).map(|k| model.se_lb_ul(k, &fpc))).unwrap();
            let fin = min_of((0..4).map(|k| model.se_lb_ul(k, &out.powers))).unwrap();
            assert!((fin - out.trace.last().unwrap()).abs() < 1e-10);
            assert!(fin >= base);
            assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
            assert!(out.powers.iter().all(|&p| (0.0..=0.1).contains(&p)));
        }
    }

    #[test]
    fn symmetric_pair_gets_equal_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let fx = Fixture::new(2, 2, vec![0, 1], 2);
        let mut links = fx.links(&mut rng);
        // user 1 sees AP 1 exactly as user 0 sees AP 0, and vice versa
        links[3] = links[0].clone();
        links[2] = links[1].clone();
        let model = fx.build_with_links(links, associate_cf(2, 2));
        let out = maxmin_dl(&model, &[Role::Gue; 2], &[1.0, 1.0], None, &opts()).unwrap();
        let r: Vec<f64> = (0..2).map(|k| model.se_lb_dl(k, &out.powers).unwrap()).collect();
        assert!((r[0] - r[1]).abs() < 0.01 * r[0], "{r:?}");
        let ul = maxmin_ul(&model, &[0.1, 0.1], &[0.1, 0.02], &opts()).unwrap();
        let r: Vec<f64> = (0..2).map(|k| model.se_lb_ul(k, &ul.powers).unwrap()).collect();
        assert!((r[0] - r[1]).abs() < 0.01 * r[0], "{r:?}");
    }

    #[test]
    fn small_blocks_also_improve() {
        let model = random_model(40, 5, 2, vec![0, 1, 2, 0, 1], 3);
        let o = MaxMinOptions {
            block_size: Some(2),
            ..opts()
        };
        let roles = [Role::Gue; 5];
        let out = maxmin_dl(&model, &roles, &[1.0, 1.0], None, &o).unwrap();
        assert!(out.trace.last().unwrap() >= &out.trace[0]);
        assert!(out.rows.iter().any(|r| r.block > 1));
    }
}
