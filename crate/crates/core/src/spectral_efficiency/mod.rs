//! Closed-form lower bounds and sampled upper bounds on spectral efficiency.
//!
//! Downlink uses conjugate beamforming on the LMMSE estimates, uplink uses
//! matched filtering. The closed forms treat the mean effective gain as known
//! and everything else as uncorrelated noise ("use and then forget").

use nalgebra::DMatrix;
use rand::Rng;

use crate::association::AssociationMap;
use crate::channel::{draw_link, LargeScaleState, LinkStats};
use crate::config::{LosPhasePolicy, SimConfig};
use crate::error::{Error, Result};
use crate::estimation::{EstimationState, PilotBook};
use crate::linalg::{quad_form, trace_product, CMat, C64, ZERO};

pub mod monte_carlo;

pub use monte_carlo::{
    dl_se_ub_mc, run_monte_carlo, uatf_terms_dl_mc, uatf_terms_ul_mc, ul_se_ub_mc, Estimate,
    McOptions, McOutcome, UatfEstimate,
};

/// Coherence-block bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub tau_c: f64,
    pub tau_p: f64,
    pub tau_d: f64,
    pub tau_u: f64,
}

impl Frame {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Frame {
            tau_c: cfg.tau_c as f64,
            tau_p: cfg.tau_p as f64,
            tau_d: cfg.tau_d(),
            tau_u: cfg.tau_u(),
        }
    }

    pub fn dl_prelog(&self) -> f64 {
        self.tau_d / self.tau_c
    }

    pub fn ul_prelog(&self) -> f64 {
        self.tau_u / self.tau_c
    }
}

pub fn se_to_rate(se: f64, bandwidth: f64) -> f64 {
    se * bandwidth
}

/// The excess fourth moment `E|gᴴDg|² - tr(D G Dᴴ G)` for a Ricean channel
/// with random LOS phase: `c² (|tr D|² + 2K Re{aᴴDa · conj(tr D)})`, `c = β/(K+1)`.
pub fn fourth_moment_excess(link: &LinkStats, d: &CMat) -> f64 {
    let tr = d.trace();
    let q = quad_form(&link.steering, d);
    fourth_moment_excess_from(link.scatter_power(), link.rice_k, tr, q)
}

fn fourth_moment_excess_from(c: f64, rice_k: f64, tr: C64, quad: C64) -> f64 {
    c * c * (tr.norm_sqr() + 2.0 * rice_k * (quad * tr.conj()).re)
}

/// Downlink excess moment of user `k`'s channel through user `j`'s estimator at AP `a`.
pub fn delta_dl(k: usize, j: usize, a: usize, ls: &LargeScaleState, est: &EstimationState) -> f64 {
    fourth_moment_excess(ls.link(k, a), est.d(j, a))
}

/// Uplink excess moment of user `j`'s channel through user `k`'s estimator at AP `a`.
pub fn delta_ul(j: usize, k: usize, a: usize, ls: &LargeScaleState, est: &EstimationState) -> f64 {
    fourth_moment_excess(ls.link(j, a), est.d(k, a))
}

/// Sampled `E|gᴴDg|²` next to the analytic `δ + tr(D G Dᴴ G)`, with the sample standard error.
pub fn fourth_moment_check<R: Rng + ?Sized>(
    link: &LinkStats,
    d: &CMat,
    n_samples: usize,
    rng: &mut R,
) -> (Estimate, f64) {
    let g = crate::channel::covariance_g(link.beta, link.rice_k, &link.steering);
    let analytic = fourth_moment_excess(link, d) + trace_product(&(d * &g), &(d.adjoint() * &g)).re;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let (x, _, _) = draw_link(link, LosPhasePolicy::PerDraw, rng);
        let v = quad_form(&x, d).norm_sqr();
        s += v;
        s2 += v * v;
    }
    let n = n_samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    (
        Estimate {
            value: mean,
            stderr: (var / (n - 1.0)).sqrt(),
        },
        analytic,
    )
}

/// Second-order statistics of one (estimator owner, channel owner, AP) triple.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairStat {
    /// `tr(D_{j,a} G_{k,a})`.
    pub t: C64,
    /// `sqrt(η_j) tr(G_{j,a} D_{j,a}ᴴ G_{k,a})`.
    pub m: f64,
    /// Excess fourth moment of `g_{k,a}` through `D_{j,a}`.
    pub delta: f64,
}

/// [`PairStat`] for every triple, exploiting `G = c(K a aᴴ + I)` so each
/// entry costs two quadratic forms.
#[derive(Clone, Debug, PartialEq)]
pub struct PairStats {
    n_users: usize,
    stats: Vec<PairStat>,
}

impl PairStats {
    pub fn new(ls: &LargeScaleState, est: &EstimationState) -> Self {
        let (nu, na) = (ls.n_users, ls.n_aps);
        let mut stats = vec![PairStat::default(); na * nu * nu];
        for a in 0..na {
            for j in 0..nu {
                let d = est.d(j, a);
                let m_mat = est.g(j, a) * d.adjoint();
                let (tr_d, tr_m) = (d.trace(), m_mat.trace());
                let sj = est.train_power[j].sqrt();
                for k in 0..nu {
                    let l = ls.link(k, a);
                    let c = l.scatter_power();
                    let (qd, qm) = if l.rice_k > 0.0 {
                        (quad_form(&l.steering, d), quad_form(&l.steering, &m_mat))
                    } else {
                        (ZERO, ZERO)
                    };
                    stats[(a * nu + j) * nu + k] = PairStat {
                        t: (qd * l.rice_k + tr_d) * c,
                        m: sj * c * (qm * l.rice_k + tr_m).re,
                        delta: fourth_moment_excess_from(c, l.rice_k, tr_d, qd),
                    };
                }
            }
        }
        PairStats { n_users: nu, stats }
    }

    /// Statistics of user `k`'s channel through user `j`'s estimator at AP `a`.
    pub fn get(&self, a: usize, j: usize, k: usize) -> &PairStat {
        &self.stats[(a * self.n_users + j) * self.n_users + k]
    }
}

/// Everything a bound needs except the powers.
#[derive(Clone, Debug)]
pub struct SeModel {
    pub ls: LargeScaleState,
    pub est: EstimationState,
    pub book: PilotBook,
    pub assoc: AssociationMap,
    pub pairs: PairStats,
    /// Downlink receiver noise power.
    pub sigma_z2: f64,
    pub frame: Frame,
    pub bandwidth: f64,
    pub phase_policy: LosPhasePolicy,
}

/// The four groups of an effective SINR: `desired / (uncertainty + interference + contamination + noise)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SinrTerms {
    pub desired: f64,
    /// Beamforming (or combining) gain uncertainty.
    pub uncertainty: f64,
    /// Non-coherent interference, including the user's own estimation-error leakage.
    pub interference: f64,
    /// Coherent pilot-contamination interference.
    pub contamination: f64,
    pub noise: f64,
}

impl SinrTerms {
    pub fn denominator(&self) -> f64 {
        self.uncertainty + self.interference + self.contamination + self.noise
    }

    pub fn sinr(&self) -> Result<f64> {
        let den = self.denominator();
        if !(den > 0.0) || !self.desired.is_finite() {
            return Err(Error::Numerical(format!("SINR denominator is not positive: {self:?}")));
        }
        Ok(self.desired / den)
    }
}

impl SeModel {
    pub fn new(
        ls: LargeScaleState,
        est: EstimationState,
        book: PilotBook,
        assoc: AssociationMap,
        sigma_z2: f64,
        frame: Frame,
        bandwidth: f64,
        phase_policy: LosPhasePolicy,
    ) -> Result<Self> {
        if assoc.n_users() != ls.n_users || assoc.n_aps() != ls.n_aps {
            return Err(Error::Association("serving map does not match the deployment".into()));
        }
        if (frame.tau_d + frame.tau_u + frame.tau_p - frame.tau_c).abs() > 1e-9 {
            return Err(Error::Domain("frame lengths do not add up to the coherence block".into()));
        }
        assoc.check()?;
        let pairs = PairStats::new(&ls, &est);
        Ok(SeModel {
            ls,
            est,
            book,
            assoc,
            pairs,
            sigma_z2,
            frame,
            bandwidth,
            phase_policy,
        })
    }

    pub fn n_users(&self) -> usize {
        self.ls.n_users
    }

    pub fn n_aps(&self) -> usize {
        self.ls.n_aps
    }

    pub fn sigma_w2(&self) -> f64 {
        self.est.sigma_w2
    }

    pub fn gamma(&self, k: usize, a: usize) -> f64 {
        self.est.gamma(k, a)
    }

    /// Users × APs matrix of estimate energies.
    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_users(), self.n_aps(), |k, a| self.gamma(k, a))
    }

    /// Downlink SINR groups of user `k` for power coefficients `eta` (users × APs).
    pub fn dl_terms(&self, k: usize, eta: &DMatrix<f64>) -> SinrTerms {
        let nu = self.n_users();
        let eta_k = self.est.train_power[k];
        let mut coherent = 0.0;
        let mut uncertainty = 0.0;
        for &a in &self.assoc.serving_aps[k] {
            let e = eta[(k, a)];
            let g = self.gamma(k, a);
            coherent += e.sqrt() * g;
            uncertainty += e * (eta_k * self.pairs.get(a, k, k).delta - g * g);
        }
        let mut interference = 0.0;
        for j in 0..nu {
            for &a in &self.assoc.serving_aps[j] {
                interference += eta[(j, a)] * self.pairs.get(a, j, k).m;
            }
        }
        let mut contamination = 0.0;
        for j in self.book.co_pilot(k) {
            let mut fourth = 0.0;
            let mut sum_t = ZERO;
            let mut sum_t2 = 0.0;
            for &a in &self.assoc.serving_aps[j] {
                let e = eta[(j, a)];
                let p = self.pairs.get(a, j, k);
                fourth += e * p.delta;
                sum_t += p.t * e.sqrt();
                sum_t2 += e * p.t.norm_sqr();
            }
            contamination += eta_k * self.book.overlap_sq(j, k) * (fourth + sum_t.norm_sqr() - sum_t2);
        }
        SinrTerms {
            desired: coherent * coherent,
            uncertainty,
            interference,
            contamination,
            noise: self.sigma_z2,
        }
    }

    /// Uplink SINR groups of user `k` for transmit powers `p`.
    pub fn ul_terms(&self, k: usize, p: &[f64]) -> SinrTerms {
        let nu = self.n_users();
        let serving = &self.assoc.serving_aps[k];
        let eta_k = self.est.train_power[k];
        let mut sum_gamma = 0.0;
        let mut uncertainty = 0.0;
        for &a in serving {
            let g = self.gamma(k, a);
            sum_gamma += g;
            uncertainty += eta_k * self.pairs.get(a, k, k).delta - g * g;
        }
        let mut interference = 0.0;
        for j in 0..nu {
            let m: f64 = serving.iter().map(|&a| self.pairs.get(a, k, j).m).sum();
            interference += p[j] * m;
        }
        let mut contamination = 0.0;
        for j in self.book.co_pilot(k) {
            let mut fourth = 0.0;
            let mut sum_t = ZERO;
            let mut sum_t2 = 0.0;
            for &a in serving {
                let s = self.pairs.get(a, k, j);
                fourth += s.delta;
                sum_t += s.t;
                sum_t2 += s.t.norm_sqr();
            }
            contamination += p[j]
                * self.est.train_power[j]
                * self.book.overlap_sq(j, k)
                * (fourth + sum_t.norm_sqr() - sum_t2);
        }
        SinrTerms {
            desired: p[k] * sum_gamma * sum_gamma,
            uncertainty: p[k] * uncertainty,
            interference,
            contamination,
            noise: self.sigma_w2() * sum_gamma,
        }
    }

    pub fn dl_sinr_lb(&self, k: usize, eta: &DMatrix<f64>) -> Result<f64> {
        self.dl_terms(k, eta).sinr()
    }

    pub fn ul_sinr_lb(&self, k: usize, p: &[f64]) -> Result<f64> {
        self.ul_terms(k, p).sinr()
    }

    pub fn se_lb_dl(&self, k: usize, eta: &DMatrix<f64>) -> Result<f64> {
        Ok(self.frame.dl_prelog() * (1.0 + self.dl_sinr_lb(k, eta)?).log2())
    }

    pub fn se_lb_ul(&self, k: usize, p: &[f64]) -> Result<f64> {
        Ok(self.frame.ul_prelog() * (1.0 + self.ul_sinr_lb(k, p)?).log2())
    }

    pub fn rate_lb_dl(&self, k: usize, eta: &DMatrix<f64>) -> Result<f64> {
        Ok(se_to_rate(self.se_lb_dl(k, eta)?, self.bandwidth))
    }

    pub fn rate_lb_ul(&self, k: usize, p: &[f64]) -> Result<f64> {
        Ok(se_to_rate(self.se_lb_ul(k, p)?, self.bandwidth))
    }

    pub fn se_lb_dl_all(&self, eta: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..self.n_users()).map(|k| self.se_lb_dl(k, eta)).collect()
    }

    pub fn se_lb_ul_all(&self, p: &[f64]) -> Result<Vec<f64>> {
        (0..self.n_users()).map(|k| self.se_lb_ul(k, p)).collect()
    }
}
