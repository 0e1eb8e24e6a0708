//! Pilot assignment, uplink training and LMMSE channel estimation.

use rand::seq::SliceRandom;
use rand::Rng;
use std::f64::consts::TAU;

use crate::channel::{ChannelRealization, LargeScaleState};
use crate::config::PilotAssignment;
use crate::error::{Error, Result};
use crate::linalg::{cn, hpd_solve, trace_product, CMat, CVec, C64};

pub use crate::channel::covariance_g;

/// Largest condition number accepted when solving with the training matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Orthonormal pilot sequences and the pilot index of every user.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    pub tau_p: usize,
    /// Column `i` is pilot `i`: a column of the unitary DFT matrix.
    pub pilots: CMat,
    pub assignment: Vec<usize>,
    /// Gram matrix `Φᴴ Φ` of the pilot set.
    gram: CMat,
}

/// Unitary `n × n` DFT matrix.
pub fn dft_matrix(n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |r, c| C64::from_polar(s, -TAU * (r * c) as f64 / n as f64))
}

impl PilotBook {
    pub fn with_assignment(tau_p: usize, assignment: Vec<usize>) -> Result<Self> {
        if tau_p == 0 {
            return Err(Error::config("tau_p", "must be at least 1"));
        }
        if let Some(&p) = assignment.iter().find(|&&p| p >= tau_p) {
            return Err(Error::config("pilot_assignment", format!("pilot {p} out of range")));
        }
        let pilots = dft_matrix(tau_p);
        let gram = pilots.adjoint() * &pilots;
        Ok(PilotBook {
            tau_p,
            pilots,
            assignment,
            gram,
        })
    }

    pub fn n_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn pilot(&self, k: usize) -> CVec {
        self.pilots.column(self.assignment[k]).into_owned()
    }

    /// `φ_iᴴ φ_k`.
    pub fn overlap(&self, i: usize, k: usize) -> C64 {
        self.gram[(self.assignment[i], self.assignment[k])]
    }

    /// `|φ_iᴴ φ_k|²`, snapped to exactly 0 or 1 for the orthonormal set.
    pub fn overlap_sq(&self, i: usize, k: usize) -> f64 {
        if self.assignment[i] == self.assignment[k] {
            1.0
        } else {
            0.0
        }
    }

    /// Users other than `k` that reuse its pilot.
    pub fn co_pilot(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let p = self.assignment[k];
        self.assignment
            .iter()
            .enumerate()
            .filter(move |&(j, &q)| j != k && q == p)
            .map(|(j, _)| j)
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    /// Number of users that share their pilot with at least one other user.
    pub fn contaminated_users(&self) -> usize {
        (0..self.n_users()).filter(|&k| self.co_pilot(k).next().is_some()).count()
    }
}

/// Build the pilot set and assign pilots to users.
pub fn assign_pilots<R: Rng + ?Sized>(
    n_users: usize,
    tau_p: usize,
    mode: &PilotAssignment,
    rng: &mut R,
) -> Result<PilotBook> {
    let assignment = match mode {
        PilotAssignment::Random => (0..n_users).map(|_| rng.random_range(0..tau_p.max(1))).collect(),
        PilotAssignment::OrthogonalForced => {
            if n_users > tau_p {
                return Err(Error::config(
                    "pilot_assignment",
                    format!("{n_users} users cannot have distinct pilots with tau_p = {tau_p}"),
                ));
            }
            let mut idx: Vec<usize> = (0..tau_p).collect();
            idx.shuffle(rng);
            idx.truncate(n_users);
            idx
        }
        PilotAssignment::Fixed(v) => {
            if v.len() != n_users {
                return Err(Error::config("pilot_assignment", "one pilot index per user is required"));
            }
            v.clone()
        }
    };
    PilotBook::with_assignment(tau_p, assignment)
}

/// Training interference-plus-noise matrix seen when projecting onto user `k`'s pilot at AP `a`:
/// `Σ_i η_i G_{i,a} |φ_iᴴφ_k|² + σ_w² I`.
///
/// With `extra_gain` each term carries an extra factor `β_{i,a}`.
pub fn matrix_b(
    k: usize,
    a: usize,
    book: &PilotBook,
    ls: &LargeScaleState,
    train_power: &[f64],
    sigma_w2: f64,
    extra_gain: bool,
) -> CMat {
    let n = ls.n_antennas;
    let mut b = CMat::identity(n, n) * C64::from(sigma_w2);
    for i in 0..ls.n_users {
        let o = book.overlap_sq(i, k);
        if o == 0.0 {
            continue;
        }
        let l = ls.link(i, a);
        let mut w = train_power[i] * o;
        if extra_gain {
            w *= l.beta;
        }
        b += covariance_g(l.beta, l.rice_k, &l.steering) * C64::from(w);
    }
    b
}

/// `D = sqrt(η_k) G B⁻¹`, via a Hermitian solve.
pub fn estimator_d(g: &CMat, b: &CMat, eta_k: f64) -> Result<CMat> {
    let x = hpd_solve(b, g, MAX_CONDITION)?;
    Ok(x.adjoint() * C64::from(eta_k.sqrt()))
}

/// `γ = sqrt(η_k) tr(G D)`: the mean energy of the channel estimate.
pub fn gamma_of(g: &CMat, d: &CMat, eta_k: f64) -> Result<f64> {
    let t = trace_product(g, d) * eta_k.sqrt();
    if t.im.abs() > 1e-6 * t.re.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "estimate energy has an imaginary residue: {t}"
        )));
    }
    Ok(t.re.max(0.0))
}

/// LMMSE estimation statistics for every (user, AP) pair, stored user-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationState {
    pub n_users: usize,
    pub n_aps: usize,
    pub n_antennas: usize,
    /// Training energy `η_k` per user.
    pub train_power: Vec<f64>,
    pub sigma_w2: f64,
    pub g: Vec<CMat>,
    pub b: Vec<CMat>,
    pub d: Vec<CMat>,
    pub gamma: Vec<f64>,
}

impl EstimationState {
    fn idx(&self, k: usize, a: usize) -> usize {
        k * self.n_aps + a
    }

    pub fn g(&self, k: usize, a: usize) -> &CMat {
        &self.g[self.idx(k, a)]
    }

    pub fn b(&self, k: usize, a: usize) -> &CMat {
        &self.b[self.idx(k, a)]
    }

    pub fn d(&self, k: usize, a: usize) -> &CMat {
        &self.d[self.idx(k, a)]
    }

    pub fn gamma(&self, k: usize, a: usize) -> f64 {
        self.gamma[self.idx(k, a)]
    }
}

/// Build `G`, `B`, `D` and `γ` for every pair.
///
/// `B` depends only on the pilot, so it is formed once per (pilot, AP).
pub fn build_estimation(
    ls: &LargeScaleState,
    book: &PilotBook,
    train_power: &[f64],
    sigma_w2: f64,
    extra_gain: bool,
) -> Result<EstimationState> {
    if !(sigma_w2 > 0.0) {
        return Err(Error::Domain("training noise power must be positive".into()));
    }
    if train_power.len() != ls.n_users || book.n_users() != ls.n_users {
        return Err(Error::Domain("training inputs do not match the user count".into()));
    }
    let (nu, na) = (ls.n_users, ls.n_aps);
    let mut b_cache: Vec<Option<CMat>> = vec![None; book.tau_p * na];
    let mut g = Vec::with_capacity(nu * na);
    let mut b = Vec::with_capacity(nu * na);
    let mut d = Vec::with_capacity(nu * na);
    let mut gamma = Vec::with_capacity(nu * na);
    for k in 0..nu {
        for a in 0..na {
            let l = ls.link(k, a);
            let gk = covariance_g(l.beta, l.rice_k, &l.steering);
            let slot = book.assignment[k] * na + a;
            let bk = b_cache[slot]
                .get_or_insert_with(|| matrix_b(k, a, book, ls, train_power, sigma_w2, extra_gain))
                .clone();
            let dk = estimator_d(&gk, &bk, train_power[k])?;
            gamma.push(gamma_of(&gk, &dk, train_power[k])?);
            g.push(gk);
            b.push(bk);
            d.push(dk);
        }
    }
    Ok(EstimationState {
        n_users: nu,
        n_aps: na,
        n_antennas: ls.n_antennas,
        train_power: train_power.to_vec(),
        sigma_w2,
        g,
        b,
        d,
        gamma,
    })
}

/// Received training signals and their pilot projections.
#[derive(Clone, Debug)]
pub struct TrainingObservation {
    pub n_aps: usize,
    /// Per AP, the `N × τ_p` received matrix.
    pub y: Vec<CMat>,
    /// Per (user, AP), `Y_a φ_k`.
    pub projections: Vec<CVec>,
}

impl TrainingObservation {
    pub fn projection(&self, k: usize, a: usize) -> &CVec {
        &self.projections[k * self.n_aps + a]
    }
}

/// `Y_a = Σ_k sqrt(η_k) g_{k,a} φ_kᴴ + W_a` and `ŷ_{k,a} = Y_a φ_k`.
pub fn training_observable<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    book: &PilotBook,
    train_power: &[f64],
    sigma_w2: f64,
    rng: &mut R,
) -> TrainingObservation {
    let na = channels.n_aps;
    let nu = book.n_users();
    let n = channels.g.first().map_or(0, |v| v.len());
    let mut y = Vec::with_capacity(na);
    for a in 0..na {
        let mut ya = CMat::from_fn(n, book.tau_p, |_, _| cn(rng, sigma_w2));
        for k in 0..nu {
            let phi = book.pilot(k);
            ya += channels.g(k, a) * phi.adjoint() * C64::from(train_power[k].sqrt());
        }
        y.push(ya);
    }
    let mut projections = Vec::with_capacity(nu * na);
    for k in 0..nu {
        let phi = book.pilot(k);
        for ya in &y {
            projections.push(ya * &phi);
        }
    }
    TrainingObservation {
        n_aps: na,
        y,
        projections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, LinkStats};
    use crate::config::LosPhasePolicy;
    use crate::linalg::{max_abs, ONE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn link(beta: f64, k: f64, n: usize, rng: &mut ChaCha8Rng) -> LinkStats {
        LinkStats {
            beta,
            rice_k: k,
            p_los: k / (k + 1.0),
            steering: CVec::from_fn(n, |i, _| {
                if i == 0 {
                    ONE
                } else {
                    C64::from_polar(1.0, rng.random::<f64>() * TAU)
                }
            }),
            los_phase: 0.0,
            shadow_db: 0.0,
            los: false,
        }
    }

    fn state(links: Vec<Vec<LinkStats>>, n: usize) -> LargeScaleState {
        let n_aps = links[0].len();
        LargeScaleState {
            n_users: links.len(),
            n_aps,
            n_antennas: n,
            links: links.into_iter().flatten().collect(),
        }
    }

    #[test]
    fn pilot_set_is_orthonormal() {
        for tau in [1, 2, 7, 32] {
            let book = PilotBook::with_assignment(tau, vec![0]).unwrap();
            let err = max_abs(&(book.gram() - CMat::identity(tau, tau)));
            assert!(err < 1e-12, "tau {tau}: {err}");
        }
    }

    #[test]
    fn random_assignment_collides_by_pigeonhole() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let book = assign_pilots(60, 32, &PilotAssignment::Random, &mut rng).unwrap();
        assert!(book.contaminated_users() >= 28);
        let book = assign_pilots(20, 32, &PilotAssignment::OrthogonalForced, &mut rng).unwrap();
        assert_eq!(book.contaminated_users(), 0);
        assert!(assign_pilots(40, 32, &PilotAssignment::OrthogonalForced, &mut rng).is_err());
        let book = assign_pilots(4, 2, &PilotAssignment::Fixed(vec![0, 1, 0, 1]), &mut rng).unwrap();
        assert_eq!(book.co_pilot(0).collect::<Vec<_>>(), vec![2]);
        assert!((book.overlap(0, 2) - ONE).norm() < 1e-12);
        assert!(book.overlap(0, 1).norm() < 1e-12);
    }

    #[test]
    fn single_user_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (beta, eta, s2, n) = (2e-3, 3.2, 1e-3, 4);
        let ls = state(vec![vec![link(beta, 0.0, n, &mut rng)]], n);
        let book = PilotBook::with_assignment(1, vec![0]).unwrap();
        let est = build_estimation(&ls, &book, &[eta], s2, false).unwrap();
        let b = est.b(0, 0);
        assert!(max_abs(&(b - CMat::identity(n, n) * C64::from(eta * beta + s2))) < 1e-15);
        let want_d = eta.sqrt() * beta / (eta * beta + s2);
        assert!(max_abs(&(est.d(0, 0) - CMat::identity(n, n) * C64::from(want_d))) < 1e-12);
        let want_gamma = n as f64 * eta * beta * beta / (eta * beta + s2);
        assert!((est.gamma(0, 0) / want_gamma - 1.0).abs() < 1e-12);
        assert!(est.gamma(0, 0) <= est.g(0, 0).trace().re);
    }

    #[test]
    fn noise_dominated_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ls = state(vec![vec![link(1e-3, 2.0, 3, &mut rng)]], 3);
        let book = PilotBook::with_assignment(1, vec![0]).unwrap();
        let est = build_estimation(&ls, &book, &[1.0], 1e9, false).unwrap();
        assert!(max_abs(est.d(0, 0)) < 1e-11);
        assert!(est.gamma(0, 0) < 1e-14);
    }

    #[test]
    fn orthogonal_pilots_only_keep_own_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ls = state(
            vec![vec![link(1.0, 1.0, 2, &mut rng)], vec![link(0.5, 3.0, 2, &mut rng)]],
            2,
        );
        let book = PilotBook::with_assignment(2, vec![0, 1]).unwrap();
        let b = matrix_b(0, 0, &book, &ls, &[2.0, 2.0], 0.1, false);
        let l = ls.link(0, 0);
        let want = covariance_g(l.beta, l.rice_k, &l.steering) * C64::from(2.0)
            + CMat::identity(2, 2) * C64::from(0.1);
        assert!(max_abs(&(b - want)) < 1e-15);
    }

    #[test]
    fn contamination_locality() {
        // Users on other pilots cannot change D.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l0 = link(1.0, 1.0, 3, &mut rng);
        let l1 = link(0.4, 0.0, 3, &mut rng);
        let l2 = link(0.7, 5.0, 3, &mut rng);
        let l2b = link(9.0, 0.1, 3, &mut rng);
        let book = PilotBook::with_assignment(2, vec![0, 0, 1]).unwrap();
        let a = build_estimation(&state(vec![vec![l0.clone()], vec![l1.clone()], vec![l2]], 3), &book, &[1.0; 3], 0.1, false).unwrap();
        let b = build_estimation(&state(vec![vec![l0], vec![l1], vec![l2b]], 3), &book, &[1.0; 3], 0.1, false).unwrap();
        assert_eq!(a.d(0, 0), b.d(0, 0));
        assert_eq!(a.d(1, 0), b.d(1, 0));
    }

    #[test]
    fn gamma_is_real_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let links = (0..5)
            .map(|_| (0..3).map(|_| link(rng.random::<f64>() + 0.1, rng.random::<f64>() * 10.0, 4, &mut rng)).collect())
            .collect();
        let ls = state(links, 4);
        let book = PilotBook::with_assignment(2, vec![0, 1, 0, 1, 0]).unwrap();
        let est = build_estimation(&ls, &book, &[1.0, 2.0, 0.5, 1.0, 3.0], 0.2, false).unwrap();
        for k in 0..5 {
            for a in 0..3 {
                let t = trace_product(est.g(k, a), est.d(k, a)) * est.train_power[k].sqrt();
                assert!(t.im.abs() < 1e-9 * t.re);
                assert!((t.re - est.gamma(k, a)).abs() < 1e-9 * t.re);
                assert!(est.gamma(k, a) <= est.g(k, a).trace().re * (1.0 + 1e-12));
                assert!(crate::linalg::is_hermitian(est.b(k, a), 1e-14));
            }
        }
    }

    /// Two users sharing one pilot at a single two-antenna AP.
    fn shared_pilot_fixture(rng: &mut ChaCha8Rng) -> (LargeScaleState, PilotBook, Vec<f64>, f64) {
        let ls = state(vec![vec![link(1.3, 2.0, 2, rng)], vec![link(0.6, 0.5, 2, rng)]], 2);
        let book = PilotBook::with_assignment(1, vec![0, 0]).unwrap();
        (ls, book, vec![1.0, 0.8], 0.3)
    }

    #[test]
    fn projection_second_moment_matches_trace_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (ls, book, eta, s2) = shared_pilot_fixture(&mut rng);
        let est = build_estimation(&ls, &book, &eta, s2, false).unwrap();
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let ch = draw_channel(&ls, LosPhasePolicy::PerDraw, &mut rng);
            let obs = training_observable(&ch, &book, &eta, s2, &mut rng);
            acc += obs.projection(0, 0).norm_squared();
        }
        let tr_b = est.b(0, 0).trace().re;
        assert!((acc / n as f64 / tr_b - 1.0).abs() < 0.03);
    }

    #[test]
    fn noiseless_projection_is_the_scaled_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (ls, book, eta, _) = shared_pilot_fixture(&mut rng);
        let ch = draw_channel(&ls, LosPhasePolicy::PerDraw, &mut rng);
        let obs = training_observable(&ch, &book, &eta, 0.0, &mut rng);
        let want = ch.g(0, 0) * C64::from(eta[0].sqrt()) + ch.g(1, 0) * C64::from(eta[1].sqrt());
        assert!((obs.projection(0, 0) - want).norm() < 1e-12);
        let single = PilotBook::with_assignment(2, vec![0, 1]).unwrap();
        let obs = training_observable(&ch, &single, &eta, 0.0, &mut rng);
        assert!((obs.projection(0, 0) - ch.g(0, 0) * C64::from(eta[0].sqrt())).norm() < 1e-12);
    }

    #[test]
    fn lmmse_oracles() {
        // γ equals the estimate energy, the error is orthogonal to the
        // estimate, and scaling D by ±5% only increases the MSE.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (ls, book, eta, s2) = shared_pilot_fixture(&mut rng);
        let est = build_estimation(&ls, &book, &eta, s2, false).unwrap();
        let d = est.d(0, 0).clone();
        let n = 1_000_000;
        let mut energy = 0.0;
        let mut corr = CMat::zeros(2, 2);
        let mut corr_sq = nalgebra::DMatrix::<f64>::zeros(2, 2);
        let mut mse = [0.0f64; 3];
        for _ in 0..n {
            let ch = draw_channel(&ls, LosPhasePolicy::PerDraw, &mut rng);
            let g = ch.g(0, 0);
            let mut yhat = g * C64::from(eta[0].sqrt()) + ch.g(1, 0) * C64::from(eta[1].sqrt());
            for i in 0..2 {
                yhat[i] += cn(&mut rng, s2);
            }
            let ghat = &d * &yhat;
            energy += ghat.norm_squared();
            let outer = (g - &ghat) * ghat.adjoint();
            corr_sq += outer.map(|z| z.norm_sqr());
            corr += outer;
            for (m, s) in mse.iter_mut().zip([0.95, 1.0, 1.05]) {
                *m += (g - &ghat * C64::from(s)).norm_squared();
            }
        }
        let nf = n as f64;
        assert!((energy / nf / est.gamma(0, 0) - 1.0).abs() < 0.01);
        for i in 0..2 {
            for j in 0..2 {
                let m = corr[(i, j)] / C64::from(nf);
                let se = ((corr_sq[(i, j)] / nf - m.norm_sqr()) / nf).sqrt();
                assert!(m.norm() < 3.0 * se, "({i},{j}) {m} se {se}");
            }
        }
        assert!(mse[1] < mse[0] && mse[1] < mse[2], "{mse:?}");
    }
}
