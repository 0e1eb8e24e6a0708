//! Joint sampling of channels, training and estimates.
//!
//! One pass per sample forms every product `g_{k,a}ᴴ ĝ_{j,a}` for serving
//! pairs; the downlink and uplink bounds, the sampled upper bounds and the
//! use-and-then-forget terms all come from those products. Standard errors
//! use a delete-one-batch jackknife.

use nalgebra::DMatrix;
use rand::Rng;

use super::SeModel;
use crate::channel::draw_link;
use crate::error::{Error, Result};
use crate::linalg::{cn_vector, CVec, C64, ZERO};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub samples: usize,
    pub batches: usize,
    /// Average `1 + SINR` instead of `log2(1 + SINR)` in the upper bound.
    pub literal_ub_no_log: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 10_000,
            batches: 50,
            literal_ub_no_log: false,
        }
    }
}

/// Sampled effective-channel terms of one user and link.
#[derive(Clone, Debug, PartialEq)]
pub struct UatfEstimate {
    /// Mean effective gain (uplink: per unit transmit amplitude).
    pub mean_gain: C64,
    /// Power of the mean effective gain.
    pub desired: f64,
    /// Variance of the effective gain.
    pub uncertainty: f64,
    /// Interference power from each other user; zero at the user's own index.
    pub interference: Vec<f64>,
    pub noise: f64,
    pub sinr: f64,
    /// Spectral efficiency assembled from the sampled terms.
    pub se: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McOutcome {
    pub n_samples: usize,
    pub dl: Vec<UatfEstimate>,
    pub ul: Vec<UatfEstimate>,
    pub dl_ub: Vec<Estimate>,
    pub ul_ub: Vec<Estimate>,
}

/// Per-user running sums over a batch.
#[derive(Clone, Copy, Debug, Default)]
struct Sums {
    n: f64,
    gain: C64,
    gain_sq: f64,
    interference: f64,
    noise: f64,
    ub: f64,
}

impl std::ops::Sub for Sums {
    type Output = Sums;
    fn sub(self, o: Sums) -> Sums {
        Sums {
            n: self.n - o.n,
            gain: self.gain - o.gain,
            gain_sq: self.gain_sq - o.gain_sq,
            interference: self.interference - o.interference,
            noise: self.noise - o.noise,
            ub: self.ub - o.ub,
        }
    }
}

impl std::ops::AddAssign for Sums {
    fn add_assign(&mut self, o: Sums) {
        self.n += o.n;
        self.gain += o.gain;
        self.gain_sq += o.gain_sq;
        self.interference += o.interference;
        self.noise += o.noise;
        self.ub += o.ub;
    }
}

/// `(desired, uncertainty, interference, noise)` from sums; `scale` multiplies the gain terms.
fn terms(s: &Sums, scale: f64, fixed_noise: f64) -> (f64, f64, f64, f64) {
    let m = s.gain / s.n;
    let desired = scale * m.norm_sqr();
    let uncertainty = scale * (s.gain_sq / s.n - m.norm_sqr()).max(0.0);
    (desired, uncertainty, s.interference / s.n, fixed_noise + s.noise / s.n)
}

fn se_from(s: &Sums, scale: f64, fixed_noise: f64, prelog: f64) -> f64 {
    let (d, u, i, n) = terms(s, scale, fixed_noise);
    prelog * (1.0 + d / (u + i + n)).log2()
}

/// Delete-one-batch jackknife of a statistic of the pooled sums.
fn jackknife(batches: &[Sums], f: impl Fn(&Sums) -> f64) -> Estimate {
    let mut total = Sums::default();
    for b in batches {
        total += *b;
    }
    let value = f(&total);
    let nb = batches.len() as f64;
    let loo: Vec<f64> = batches.iter().map(|b| f(&(total - *b))).collect();
    let mean = loo.iter().sum::<f64>() / nb;
    let var = (nb - 1.0) / nb * loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    Estimate {
        value,
        stderr: var.sqrt(),
    }
}

/// Sample `opts.samples` joint channel/training realizations.
///
/// `eta` holds downlink power coefficients (users × APs) and `p` uplink transmit powers.
pub fn run_monte_carlo<R: Rng + ?Sized>(
    model: &SeModel,
    eta: &DMatrix<f64>,
    p: &[f64],
    opts: &McOptions,
    rng: &mut R,
) -> Result<McOutcome> {
    let nu = model.n_users();
    let na = model.n_aps();
    let n_ant = model.ls.n_antennas;
    if opts.samples == 0 || opts.batches == 0 || opts.batches > opts.samples {
        return Err(Error::Domain(format!(
            "need 1 <= batches <= samples, got {} batches for {} samples",
            opts.batches, opts.samples
        )));
    }
    if eta.nrows() != nu || eta.ncols() != na || p.len() != nu {
        return Err(Error::Domain("power dimensions do not match the deployment".into()));
    }
    let tau_p = model.book.tau_p;
    let sw2 = model.sigma_w2();
    let sz2 = model.sigma_z2;
    let train_amp: Vec<f64> = model.est.train_power.iter().map(|e| e.sqrt()).collect();
    let pilots = &model.book.assignment;
    let serving = &model.assoc.serving_aps;
    let dl_pre = model.frame.dl_prelog();
    let ul_pre = model.frame.ul_prelog();

    let mut dl_batches = vec![vec![Sums::default(); opts.batches]; nu];
    let mut ul_batches = vec![vec![Sums::default(); opts.batches]; nu];
    let mut dl_int = DMatrix::<f64>::zeros(nu, nu);
    let mut ul_int = DMatrix::<f64>::zeros(nu, nu);

    let mut g: Vec<CVec> = vec![CVec::zeros(n_ant); nu * na];
    let mut yhat: Vec<CVec> = vec![CVec::zeros(n_ant); tau_p * na];
    let mut x = DMatrix::<C64>::zeros(nu, nu);
    let mut y = DMatrix::<C64>::zeros(nu, nu);
    let mut ghat_energy = vec![0.0; nu];
    let mut ul_noise = vec![ZERO; nu];

    for s in 0..opts.samples {
        let batch = s * opts.batches / opts.samples;
        for (slot, link) in g.iter_mut().zip(&model.ls.links) {
            *slot = draw_link(link, model.phase_policy, rng).0;
        }
        for v in yhat.iter_mut() {
            *v = cn_vector(rng, n_ant, sw2);
        }
        for i in 0..nu {
            let amp = C64::from(train_amp[i]);
            for a in 0..na {
                let v = &g[i * na + a];
                yhat[pilots[i] * na + a].axpy(amp, v, crate::linalg::ONE);
            }
        }
        let w: Vec<CVec> = (0..na).map(|_| cn_vector(rng, n_ant, sw2)).collect();
        x.fill(ZERO);
        y.fill(ZERO);
        for j in 0..nu {
            ghat_energy[j] = 0.0;
            ul_noise[j] = ZERO;
            for &a in &serving[j] {
                let gh = model.est.d(j, a) * &yhat[pilots[j] * na + a];
                ghat_energy[j] += gh.norm_squared();
                ul_noise[j] += gh.dotc(&w[a]);
                let amp = eta[(j, a)].sqrt();
                for k in 0..nu {
                    let prod = g[k * na + a].dotc(&gh);
                    x[(k, j)] += prod * amp;
                    y[(j, k)] += prod.conj();
                }
            }
        }
        for k in 0..nu {
            // downlink: user k receives every beam j
            let mut int = 0.0;
            for j in 0..nu {
                if j != k {
                    let v = x[(k, j)].norm_sqr();
                    dl_int[(k, j)] += v;
                    int += v;
                }
            }
            let own = x[(k, k)];
            let sinr = own.norm_sqr() / (int + sz2);
            let sums = &mut dl_batches[k][batch];
            sums.n += 1.0;
            sums.gain += own;
            sums.gain_sq += own.norm_sqr();
            sums.interference += int;
            sums.ub += if opts.literal_ub_no_log { dl_pre * (1.0 + sinr) } else { dl_pre * (1.0 + sinr).log2() };

            // uplink: AP set of user k combines every user j
            let mut int = 0.0;
            for j in 0..nu {
                if j != k {
                    let v = p[j] * y[(k, j)].norm_sqr();
                    ul_int[(k, j)] += v;
                    int += v;
                }
            }
            let own = y[(k, k)];
            let sinr = p[k] * own.norm_sqr() / (int + sw2 * ghat_energy[k]);
            let sums = &mut ul_batches[k][batch];
            sums.n += 1.0;
            sums.gain += own;
            sums.gain_sq += own.norm_sqr();
            sums.interference += int;
            sums.noise += ul_noise[k].norm_sqr();
            sums.ub += if opts.literal_ub_no_log { ul_pre * (1.0 + sinr) } else { ul_pre * (1.0 + sinr).log2() };
        }
    }

    let n = opts.samples as f64;
    let assemble = |batches: &[Sums], int_row: Vec<f64>, scale: f64, fixed_noise: f64, prelog: f64| {
        let mut total = Sums::default();
        for b in batches {
            total += *b;
        }
        let (desired, uncertainty, _, noise) = terms(&total, scale, fixed_noise);
        let interference_total = total.interference / total.n;
        UatfEstimate {
            mean_gain: total.gain / total.n,
            desired,
            uncertainty,
            interference: int_row,
            noise,
            sinr: desired / (uncertainty + interference_total + noise),
            se: jackknife(batches, |s| se_from(s, scale, fixed_noise, prelog)),
        }
    };
    let mut dl = Vec::with_capacity(nu);
    let mut ul = Vec::with_capacity(nu);
    let mut dl_ub = Vec::with_capacity(nu);
    let mut ul_ub = Vec::with_capacity(nu);
    for k in 0..nu {
        let row: Vec<f64> = (0..nu).map(|j| dl_int[(k, j)] / n).collect();
        dl.push(assemble(&dl_batches[k], row, 1.0, sz2, dl_pre));
        let row: Vec<f64> = (0..nu).map(|j| ul_int[(k, j)] / n).collect();
        ul.push(assemble(&ul_batches[k], row, p[k], 0.0, ul_pre));
        dl_ub.push(jackknife(&dl_batches[k], |s| s.ub / s.n));
        ul_ub.push(jackknife(&ul_batches[k], |s| s.ub / s.n));
    }
    Ok(McOutcome {
        n_samples: opts.samples,
        dl,
        ul,
        dl_ub,
        ul_ub,
    })
}

/// Sampled downlink terms of user `k`.
pub fn uatf_terms_dl_mc<R: Rng + ?Sized>(
    k: usize,
    model: &SeModel,
    eta: &DMatrix<f64>,
    p: &[f64],
    opts: &McOptions,
    rng: &mut R,
) -> Result<UatfEstimate> {
    Ok(run_monte_carlo(model, eta, p, opts, rng)?.dl.swap_remove(k))
}

/// Sampled uplink terms of user `k`.
pub fn uatf_terms_ul_mc<R: Rng + ?Sized>(
    k: usize,
    model: &SeModel,
    eta: &DMatrix<f64>,
    p: &[f64],
    opts: &McOptions,
    rng: &mut R,
) -> Result<UatfEstimate> {
    Ok(run_monte_carlo(model, eta, p, opts, rng)?.ul.swap_remove(k))
}

/// Sampled downlink upper bound of user `k`.
pub fn dl_se_ub_mc<R: Rng + ?Sized>(
    k: usize,
    model: &SeModel,
    eta: &DMatrix<f64>,
    p: &[f64],
    opts: &McOptions,
    rng: &mut R,
) -> Result<Estimate> {
    Ok(run_monte_carlo(model, eta, p, opts, rng)?.dl_ub[k])
}

/// Sampled uplink upper bound of user `k`.
pub fn ul_se_ub_mc<R: Rng + ?Sized>(
    k: usize,
    model: &SeModel,
    eta: &DMatrix<f64>,
    p: &[f64],
    opts: &McOptions,
    rng: &mut R,
) -> Result<Estimate> {
    Ok(run_monte_carlo(model, eta, p, opts, rng)?.ul_ub[k])
}
