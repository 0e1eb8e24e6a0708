//! Power allocation: closed-form downlink rules, fractional uplink control and
//! the max-min optimizers.
//!
//! Downlink powers are stored as coefficients `η_{k,a}`; the power AP `a`
//! spends on user `k` is `η_{k,a} γ_{k,a}`.

mod maxmin;
mod solver;
mod surrogate;

pub use maxmin::{maxmin_dl, maxmin_ul, MaxMinOutcome, MaxMinStatus, TraceRow};
pub use solver::{solve_block_subproblem, BlockSolution, Domain};
pub use surrogate::{dl_block_forms, ul_affine_forms, BlockVar, ConcaveRate, SeparableForm, UlLinearModel};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::association::AssociationMap;
use crate::deployment::Role;
use crate::error::{Error, Result};
use crate::estimation::EstimationState;

/// Users of one AP that share a budget: all of them, or one role when a UAV
/// share `κ` is set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerClass {
    pub ap: usize,
    pub role: Option<Role>,
    pub users: Vec<usize>,
    pub budget: f64,
}

/// Budget classes per AP. Classes without users are dropped, so an AP that
/// serves no UAV leaves the UAV share unused.
pub fn power_classes(assoc: &AssociationMap, roles: &[Role], budgets: &[f64], kappa: Option<f64>) -> Result<Vec<PowerClass>> {
    if budgets.len() != assoc.n_aps() || roles.len() != assoc.n_users() {
        return Err(Error::Domain("budget or role list does not match the serving map".into()));
    }
    if let Some(k) = kappa {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::config("power.kappa", format!("must lie in [0, 1], got {k}")));
        }
    }
    let mut classes = Vec::new();
    for (a, users) in assoc.served_users.iter().enumerate() {
        match kappa {
            None => classes.push(PowerClass {
                ap: a,
                role: None,
                users: users.clone(),
                budget: budgets[a],
            }),
            Some(k) => {
                for (role, share) in [(Role::Gue, 1.0 - k), (Role::Uav, k)] {
                    classes.push(PowerClass {
                        ap: a,
                        role: Some(role),
                        users: users.iter().copied().filter(|&u| roles[u] == role).collect(),
                        budget: share * budgets[a],
                    });
                }
            }
        }
    }
    classes.retain(|c| !c.users.is_empty());
    Ok(classes)
}

/// Downlink and uplink powers of one drop.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    /// `η_{k,a}`, users × APs, zero outside the serving sets.
    pub dl: DMatrix<f64>,
    /// Uplink transmit power per user.
    pub ul: Vec<f64>,
    pub dl_budgets: Vec<f64>,
    pub ul_max: Vec<f64>,
    pub kappa: Option<f64>,
}

impl PowerAllocation {
    /// Normalized coefficients `η_{k,a} Σ_{j∈K_a} γ_{j,a}`, equal to one for every user under an even split.
    pub fn dl_normalized(&self, gamma: &DMatrix<f64>, assoc: &AssociationMap) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dl.nrows(), self.dl.ncols());
        for (a, users) in assoc.served_users.iter().enumerate() {
            let total: f64 = users.iter().map(|&j| gamma[(j, a)]).sum();
            for &k in users {
                out[(k, a)] = self.dl[(k, a)] * total;
            }
        }
        out
    }

    /// Check the per-AP budgets, each class budget under `κ`, and the uplink box.
    pub fn check(&self, gamma: &DMatrix<f64>, assoc: &AssociationMap, roles: &[Role]) -> Result<()> {
        const TOL: f64 = 1e-9;
        for c in power_classes(assoc, roles, &self.dl_budgets, self.kappa)? {
            let used = class_power(&self.dl, gamma, &c.users, c.ap);
            if used > c.budget * (1.0 + TOL) + f64::MIN_POSITIVE {
                return Err(Error::Numerical(format!(
                    "AP {} spends {used} of a budget of {}",
                    c.ap, c.budget
                )));
            }
        }
        if self.dl.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::Numerical("negative or NaN downlink coefficient".into()));
        }
        for (k, (&p, &pmax)) in self.ul.iter().zip(&self.ul_max).enumerate() {
            if !(p >= 0.0 && p <= pmax * (1.0 + TOL)) {
                return Err(Error::Numerical(format!("user {k} transmits {p} W, limit {pmax} W")));
            }
        }
        Ok(())
    }
}

/// Power AP `a` spends on `users`.
pub fn class_power(eta: &DMatrix<f64>, gamma: &DMatrix<f64>, users: &[usize], a: usize) -> f64 {
    users.iter().map(|&k| eta[(k, a)] * gamma[(k, a)]).sum()
}

/// Power AP `a` spends on users of `role`.
pub fn role_power(eta: &DMatrix<f64>, gamma: &DMatrix<f64>, assoc: &AssociationMap, roles: &[Role], role: Role, a: usize) -> f64 {
    assoc.served_users[a]
        .iter()
        .filter(|&&k| roles[k] == role)
        .map(|&k| eta[(k, a)] * gamma[(k, a)])
        .sum()
}

fn coefficient(power: f64, gamma: f64) -> f64 {
    if gamma > 0.0 {
        power / gamma
    } else {
        0.0
    }
}

/// Proportional allocation: each class splits its budget in proportion to `γ`.
pub fn ppa_dl(gamma: &DMatrix<f64>, assoc: &AssociationMap, roles: &[Role], budgets: &[f64], kappa: Option<f64>) -> Result<DMatrix<f64>> {
    let mut eta = DMatrix::zeros(gamma.nrows(), gamma.ncols());
    for c in power_classes(assoc, roles, budgets, kappa)? {
        let total: f64 = c.users.iter().map(|&k| gamma[(k, c.ap)]).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateInput(format!("every user of AP {} has a zero channel estimate", c.ap)));
        }
        for &k in &c.users {
            // P = budget γ / Σγ, so η = budget / Σγ
            eta[(k, c.ap)] = if gamma[(k, c.ap)] > 0.0 { c.budget / total } else { 0.0 };
        }
    }
    Ok(eta)
}

/// Water level `ν` with `Σ (ν - L_i)⁺ = budget`. Infinite levels never receive power.
pub fn solve_water_level(levels: &[f64], budget: f64) -> Result<f64> {
    if !(budget > 0.0) {
        return Err(Error::Domain(format!("water-filling budget must be positive, got {budget}")));
    }
    let mut sorted: Vec<f64> = levels.iter().copied().filter(|l| l.is_finite()).collect();
    if sorted.is_empty() {
        return Err(Error::DegenerateInput("no finite noise level to fill".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    for (i, &l) in sorted.iter().enumerate() {
        prefix += l;
        let nu = (budget + prefix) / (i + 1) as f64;
        if sorted.get(i + 1).is_none_or(|&next| nu <= next) {
            return Ok(nu);
        }
    }
    unreachable!("the last prefix always satisfies the level condition")
}

/// Water-filling over `L_{k,a} = σ_z² / γ_{k,a}` within each class.
pub fn wfpa_dl(
    gamma: &DMatrix<f64>,
    assoc: &AssociationMap,
    roles: &[Role],
    budgets: &[f64],
    sigma_z2: f64,
    kappa: Option<f64>,
) -> Result<DMatrix<f64>> {
    let mut eta = DMatrix::zeros(gamma.nrows(), gamma.ncols());
    for c in power_classes(assoc, roles, budgets, kappa)? {
        if c.budget == 0.0 {
            continue;
        }
        let levels: Vec<f64> = c
            .users
            .iter()
            .map(|&k| {
                let g = gamma[(k, c.ap)];
                if g > 0.0 {
                    sigma_z2 / g
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let nu = solve_water_level(&levels, c.budget)
            .map_err(|e| Error::DegenerateInput(format!("AP {}: {e}", c.ap)))?;
        for (&k, &l) in c.users.iter().zip(&levels) {
            eta[(k, c.ap)] = coefficient((nu - l).max(0.0), gamma[(k, c.ap)]);
        }
    }
    Ok(eta)
}

/// Equal transmitted power to every served user.
pub fn uniform_dl(gamma: &DMatrix<f64>, assoc: &AssociationMap, roles: &[Role], budgets: &[f64], kappa: Option<f64>) -> Result<DMatrix<f64>> {
    let mut eta = DMatrix::zeros(gamma.nrows(), gamma.ncols());
    for c in power_classes(assoc, roles, budgets, kappa)? {
        let share = c.budget / c.users.len() as f64;
        for &k in &c.users {
            eta[(k, c.ap)] = coefficient(share, gamma[(k, c.ap)]);
        }
    }
    Ok(eta)
}

/// Fractional power control `min(P_max, P₀ ζ^{-α})` with
/// `ζ_k = sqrt(Σ_{a∈A_k} tr G_{k,a})`.
pub fn fpc_ul(est: &EstimationState, assoc: &AssociationMap, p_max: &[f64], p0: f64, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha >= 0.0) {
        return Err(Error::config("power.fpc_alpha", format!("must be non-negative, got {alpha}")));
    }
    if !(p0 > 0.0) {
        return Err(Error::config("power.fpc_p0_dbm", "reference power must be positive"));
    }
    (0..assoc.n_users())
        .map(|k| {
            let aps = &assoc.serving_aps[k];
            if aps.is_empty() {
                return Err(Error::Association(format!("user {k} has no serving AP")));
            }
            let zeta = aps.iter().map(|&a| est.g(k, a).trace().re).sum::<f64>().sqrt();
            Ok(p_max[k].min(p0 * zeta.powf(-alpha)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{associate_cf, associate_uc};
    use proptest::prelude::*;

    fn roles(n_gue: usize, n_uav: usize) -> Vec<Role> {
        let mut r = vec![Role::Gue; n_gue];
        r.extend(vec![Role::Uav; n_uav]);
        r
    }

    /// Sort-and-scan free oracle: bisection on the monotone fill function.
    fn bisect_level(levels: &[f64], budget: f64) -> f64 {
        let fill = |nu: f64| levels.iter().map(|l| (nu - l).max(0.0)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, levels.iter().cloned().fold(0.0, f64::max) + budget);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fill(mid) < budget {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn water_level_examples() {
        let nu = solve_water_level(&[1.0, 2.0, 10.0], 3.0).unwrap();
        assert_eq!(nu, 3.0);
        let powers: Vec<f64> = [1.0, 2.0, 10.0].iter().map(|l| (nu - l).max(0.0)).collect();
        assert_eq!(powers, vec![2.0, 1.0, 0.0]);
        assert_eq!(solve_water_level(&[7.0], 2.5).unwrap(), 9.5);
        assert_eq!(solve_water_level(&[2.0; 4], 2.0).unwrap(), 2.5);
        assert!(solve_water_level(&[], 1.0).is_err());
        assert!(solve_water_level(&[1.0], 0.0).is_err());
        assert_eq!(solve_water_level(&[1.0, f64::INFINITY], 1.0).unwrap(), 2.0);
    }

    proptest! {
        #[test]
        fn water_level_kkt(levels in proptest::collection::vec(0.01..20.0f64, 1..12), budget in 0.01..50.0f64) {
            let nu = solve_water_level(&levels, budget).unwrap();
            let fill: f64 = levels.iter().map(|l| (nu - l).max(0.0)).sum();
            prop_assert!((fill - budget).abs() <= 1e-12 * budget.max(1.0) * levels.len() as f64);
            // active users share ν, inactive ones sit at or above it
            for &l in &levels {
                let p = (nu - l).max(0.0);
                prop_assert!(p == 0.0 && l >= nu || p > 0.0 && (p + l - nu).abs() < 1e-12 * nu);
            }
            let oracle = bisect_level(&levels, budget);
            prop_assert!((nu - oracle).abs() < 1e-9 * nu.max(1.0));
        }

        #[test]
        fn ppa_spends_every_budget(vals in proptest::collection::vec(0.01..5.0f64, 15), b in 0.1..3.0f64) {
            let gamma = DMatrix::from_row_slice(5, 3, &vals);
            let assoc = associate_cf(3, 5);
            let r = roles(3, 2);
            let budgets = vec![b, 2.0 * b, 0.5 * b];
            let eta = ppa_dl(&gamma, &assoc, &r, &budgets, None).unwrap();
            for a in 0..3 {
                let used = class_power(&eta, &gamma, &assoc.served_users[a], a);
                prop_assert!((used - budgets[a]).abs() < 1e-12 * budgets[a]);
                for k in 0..5 {
                    let want = budgets[a] * gamma[(k, a)] / gamma.column(a).sum();
                    prop_assert!((eta[(k, a)] * gamma[(k, a)] - want).abs() < 1e-12 * budgets[a]);
                }
            }
            let eta = wfpa_dl(&gamma, &assoc, &r, &budgets, 0.3, None).unwrap();
            for a in 0..3 {
                let used = class_power(&eta, &gamma, &assoc.served_users[a], a);
                prop_assert!((used - budgets[a]).abs() < 1e-12 * budgets[a]);
            }
        }
    }

    #[test]
    fn ppa_symmetry_and_kappa() {
        let gamma = DMatrix::from_element(2, 1, 0.5);
        let assoc = associate_cf(1, 2);
        let eta = ppa_dl(&gamma, &assoc, &roles(2, 0), &[1.0], None).unwrap();
        assert_eq!(eta[(0, 0)] * 0.5, 0.5);
        assert_eq!(eta[(1, 0)] * 0.5, 0.5);

        let gamma = DMatrix::from_row_slice(2, 1, &[0.3, 0.9]);
        let r = roles(1, 1);
        for alloc in [
            ppa_dl(&gamma, &assoc, &r, &[2.0], Some(0.2)).unwrap(),
            wfpa_dl(&gamma, &assoc, &r, &[2.0], 0.1, Some(0.2)).unwrap(),
        ] {
            let uav = role_power(&alloc, &gamma, &assoc, &r, Role::Uav, 0);
            let gue = role_power(&alloc, &gamma, &assoc, &r, Role::Gue, 0);
            assert!((uav - 0.4).abs() < 1e-15);
            assert!((gue - 1.6).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gamma_ap_is_degenerate() {
        let gamma = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let assoc = associate_cf(2, 2);
        let err = ppa_dl(&gamma, &assoc, &roles(2, 0), &[1.0, 1.0], None).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
        assert!(wfpa_dl(&gamma, &assoc, &roles(2, 0), &[1.0, 1.0], 0.1, None).is_err());
    }

    #[test]
    fn wfpa_examples() {
        let assoc = associate_cf(1, 3);
        // L = σ²/γ = (1, 2, 10) with σ² = 1
        let gamma = DMatrix::from_row_slice(3, 1, &[1.0, 0.5, 0.1]);
        let eta = wfpa_dl(&gamma, &assoc, &roles(3, 0), &[3.0], 1.0, None).unwrap();
        let p: Vec<f64> = (0..3).map(|k| eta[(k, 0)] * gamma[(k, 0)]).collect();
        assert!((p[0] - 2.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15 && p[2] == 0.0);

        let single = associate_cf(1, 1);
        let g1 = DMatrix::from_element(1, 1, 1e-6);
        let eta = wfpa_dl(&g1, &single, &roles(1, 0), &[0.7], 1.0, None).unwrap();
        // ν - L cancels about 6 digits here
        assert!((eta[(0, 0)] * 1e-6 - 0.7).abs() < 1e-9);
    }

    #[test]
    fn kappa_classes_skip_missing_roles() {
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        let assoc = associate_uc(&beta, 1).unwrap();
        let c = power_classes(&assoc, &roles(1, 1), &[1.0, 1.0], Some(0.25)).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].ap, c[0].role, c[0].budget), (0, Some(Role::Gue), 0.75));
        assert_eq!((c[1].ap, c[1].role, c[1].budget), (1, Some(Role::Uav), 0.25));
        assert!(power_classes(&assoc, &roles(1, 1), &[1.0, 1.0], Some(1.5)).unwrap_err().is_config());
    }

    #[test]
    fn fpc_branches() {
        use crate::test_support::Fixture;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = Fixture::new(3, 2, vec![0, 1, 2], 3).build(associate_cf(2, 3), &mut rng);
        let zeta: Vec<f64> = (0..3)
            .map(|k| (0..2).map(|a| model.est.g(k, a).trace().re).sum::<f64>().sqrt())
            .collect();
        let p_max = vec![1.0; 3];
        // compensation branch: P0 ζ^-α below the cap
        let p = fpc_ul(&model.est, &model.assoc, &p_max, 1e-3, 0.5).unwrap();
        for k in 0..3 {
            assert!((p[k] - 1e-3 / zeta[k].sqrt()).abs() < 1e-15);
        }
        // cap branch
        let p = fpc_ul(&model.est, &model.assoc, &p_max, 1e3, 0.5).unwrap();
        assert_eq!(p, p_max);
        // no compensation
        let p = fpc_ul(&model.est, &model.assoc, &p_max, 0.2, 0.0).unwrap();
        assert_eq!(p, vec![0.2; 3]);
        assert!(fpc_ul(&model.est, &model.assoc, &p_max, 0.2, -1.0).unwrap_err().is_config());
    }

    #[test]
    fn uniform_splits_evenly() {
        let gamma = DMatrix::from_row_slice(2, 1, &[0.2, 0.8]);
        let eta = uniform_dl(&gamma, &associate_cf(1, 2), &roles(2, 0), &[1.0], None).unwrap();
        assert!((eta[(0, 0)] * 0.2 - 0.5).abs() < 1e-15);
        assert!((eta[(1, 0)] * 0.8 - 0.5).abs() < 1e-15);
    }
}
