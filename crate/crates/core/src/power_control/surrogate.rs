//! Concave rate models for the block subproblems.
//!
//! With every variable outside the block held fixed, the numerator
//! `desired + denominator` and the denominator of a user's SINR are both
//! separable in the block variables: a constant, a linear part and a
//! square-root part. The surrogate keeps the numerator (with any convex
//! `-sqrt` piece replaced by its tangent) and linearizes `log2` of the
//! denominator at the anchor.

use nalgebra::DMatrix;

use crate::linalg::ZERO;
use crate::spectral_efficiency::SeModel;

/// Floor applied to anchor coordinates before differentiating `sqrt`.
const SQRT_FLOOR: f64 = 1e-9;

/// `c + Σ l_i x_i + Σ q_i sqrt(x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableForm {
    pub constant: f64,
    pub lin: Vec<f64>,
    pub sqrt: Vec<f64>,
}

impl SeparableForm {
    pub fn constant(c: f64, n: usize) -> Self {
        SeparableForm {
            constant: c,
            lin: vec![0.0; n],
            sqrt: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for ((&l, &q), &xi) in self.lin.iter().zip(&self.sqrt).zip(x) {
            v += l * xi + q * xi.sqrt();
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.lin
            .iter()
            .zip(&self.sqrt)
            .zip(x)
            .map(|((&l, &q), &xi)| if q == 0.0 { l } else { l + q / (2.0 * xi.sqrt()) })
            .collect()
    }

    /// Diagonal of the Hessian.
    pub fn curvature(&self, x: &[f64]) -> Vec<f64> {
        self.sqrt
            .iter()
            .zip(x)
            .map(|(&q, &xi)| if q == 0.0 { 0.0 } else { -q / (4.0 * xi * xi.sqrt()) })
            .collect()
    }

    /// Replace every negative square-root term by its tangent at `anchor`,
    /// giving a concave form that never exceeds `self`.
    pub fn concave_minorant(&self, anchor: &[f64]) -> SeparableForm {
        let mut out = self.clone();
        for i in 0..self.dim() {
            let q = self.sqrt[i];
            if q < 0.0 {
                let x0 = anchor[i].max(SQRT_FLOOR);
                let r = x0.sqrt();
                // q sqrt(x) >= q (r/2 + x/(2r)) because sqrt(x) <= r/2 + x/(2r)
                out.constant += q * r / 2.0;
                out.lin[i] += q / (2.0 * r);
                out.sqrt[i] = 0.0;
            }
        }
        out
    }

    fn floored_gradient(&self, x: &[f64]) -> Vec<f64> {
        let floored: Vec<f64> = x.iter().map(|&v| v.max(SQRT_FLOOR)).collect();
        self.gradient(&floored)
    }
}

/// `prelog [log2 N(x) - offset - slope·x]` with `N` concave and positive.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcaveRate {
    pub num: SeparableForm,
    pub offset: f64,
    pub slope: Vec<f64>,
    pub prelog: f64,
}

impl ConcaveRate {
    /// Surrogate of `prelog log2(num / den)` anchored at `anchor`.
    pub fn new(num: &SeparableForm, den: &SeparableForm, anchor: &[f64], prelog: f64) -> Self {
        let d0 = den.value(anchor);
        let grad = den.floored_gradient(anchor);
        let slope: Vec<f64> = grad.iter().map(|g| g / (d0 * std::f64::consts::LN_2)).collect();
        let offset = d0.log2() - slope.iter().zip(anchor).map(|(s, x)| s * x).sum::<f64>();
        ConcaveRate {
            num: num.concave_minorant(anchor),
            offset,
            slope,
            prelog,
        }
    }

    pub fn dim(&self) -> usize {
        self.slope.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.num.value(x);
        if !(n > 0.0) {
            return f64::NEG_INFINITY;
        }
        let lin: f64 = self.slope.iter().zip(x).map(|(s, v)| s * v).sum();
        self.prelog * (n.log2() - self.offset - lin)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num.value(x);
        self.num
            .gradient(x)
            .iter()
            .zip(&self.slope)
            .map(|(g, s)| self.prelog * (g / (n * std::f64::consts::LN_2) - s))
            .collect()
    }

    /// Full Hessian; negative semidefinite.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.num.value(x);
        let g = self.num.gradient(x);
        let c = self.num.curvature(x);
        let scale = self.prelog / std::f64::consts::LN_2;
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            let diag = if i == j { c[i] / n } else { 0.0 };
            scale * (diag - g[i] * g[j] / (n * n))
        })
    }
}

/// One downlink block variable: `η_{user,ap} = scale · x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockVar {
    pub user: usize,
    pub ap: usize,
    pub scale: f64,
}

/// Per-user `(numerator, denominator)` forms of the downlink SINR in the
/// block variables, all other coefficients taken from `eta`.
///
/// With `without_uncertainty` the beamforming-uncertainty term is left out of both.
pub fn dl_block_forms(model: &SeModel, eta: &DMatrix<f64>, vars: &[BlockVar], without_uncertainty: bool) -> Vec<(SeparableForm, SeparableForm)> {
    let n = vars.len();
    let mut eta0 = eta.clone();
    for v in vars {
        eta0[(v.user, v.ap)] = 0.0;
    }
    (0..model.n_users())
        .map(|k| {
            let t0 = model.dl_terms(k, &eta0);
            let mut base = t0.denominator();
            if without_uncertainty {
                base -= t0.uncertainty;
            }
            let eta_k = model.est.train_power[k];
            let s_rest = t0.desired.sqrt();
            let mut den = SeparableForm::constant(base, n);
            let mut own_lin = vec![0.0; n];
            let mut own_sqrt = vec![0.0; n];
            for (i, v) in vars.iter().enumerate() {
                let (u, a, s) = (v.user, v.ap, v.scale);
                let pk = model.pairs.get(a, u, k);
                den.lin[i] += pk.m * s;
                if u == k {
                    let g = model.gamma(k, a);
                    own_lin[i] = g * g * s;
                    own_sqrt[i] = 2.0 * s_rest * g * s.sqrt();
                    if !without_uncertainty {
                        den.lin[i] += (eta_k * pk.delta - g * g) * s;
                    }
                } else if model.book.assignment[u] == model.book.assignment[k] {
                    let o = model.book.overlap_sq(u, k);
                    let rest = model.assoc.serving_aps[u]
                        .iter()
                        .fold(ZERO, |acc, &b| acc + model.pairs.get(b, u, k).t * eta0[(u, b)].sqrt());
                    den.lin[i] += eta_k * o * pk.delta * s;
                    den.sqrt[i] += eta_k * o * 2.0 * (pk.t * rest.conj()).re * s.sqrt();
                }
            }
            let mut num = den.clone();
            num.constant += t0.desired;
            for i in 0..n {
                num.lin[i] += own_lin[i];
                num.sqrt[i] += own_sqrt[i];
            }
            (num, den)
        })
        .collect()
}

/// Uplink SINR terms are linear in the transmit powers; this caches the
/// coefficients so block forms are cheap to rebuild.
#[derive(Clone, Debug)]
pub struct UlLinearModel {
    /// `den[(k, j)]`: growth of user `k`'s denominator per watt of user `j`.
    den: DMatrix<f64>,
    /// `(Σ_{a∈A_k} γ_{k,a})²`.
    gain: Vec<f64>,
    noise: Vec<f64>,
}

impl UlLinearModel {
    pub fn new(model: &SeModel) -> Self {
        let nu = model.n_users();
        let zero = vec![0.0; nu];
        let noise: Vec<f64> = (0..nu).map(|k| model.ul_terms(k, &zero).noise).collect();
        let mut unit = zero.clone();
        let mut den = DMatrix::zeros(nu, nu);
        let mut gain = vec![0.0; nu];
        for j in 0..nu {
            unit[j] = 1.0;
            for k in 0..nu {
                let t = model.ul_terms(k, &unit);
                den[(k, j)] = t.denominator() - t.noise;
                if j == k {
                    gain[k] = t.desired;
                }
            }
            unit[j] = 0.0;
        }
        UlLinearModel { den, gain, noise }
    }

    pub fn denominator(&self, k: usize, p: &[f64]) -> f64 {
        self.noise[k] + p.iter().enumerate().map(|(j, pj)| self.den[(k, j)] * pj).sum::<f64>()
    }

    pub fn sinr(&self, k: usize, p: &[f64]) -> f64 {
        p[k] * self.gain[k] / self.denominator(k, p)
    }
}

/// Per-user affine `(numerator, denominator)` forms of the uplink SINR in the
/// variables `p_{users[i]} = scale[i] · x_i`.
pub fn ul_affine_forms(lin: &UlLinearModel, p: &[f64], users: &[usize], scale: &[f64]) -> Vec<(SeparableForm, SeparableForm)> {
    let n = users.len();
    let mut p0 = p.to_vec();
    for &u in users {
        p0[u] = 0.0;
    }
    (0..p.len())
        .map(|k| {
            let mut den = SeparableForm::constant(lin.denominator(k, &p0), n);
            for (i, (&u, &s)) in users.iter().zip(scale).enumerate() {
                den.lin[i] = lin.den[(k, u)] * s;
            }
            let mut num = den.clone();
            num.constant += p0[k] * lin.gain[k];
            for (i, (&u, &s)) in users.iter().zip(scale).enumerate() {
                if u == k {
                    num.lin[i] += lin.gain[k] * s;
                }
            }
            (num, den)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::associate_cf;
    use crate::power_control::ppa_dl;
    use crate::deployment::Role;
    use crate::test_support::Fixture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block_vars(model: &SeModel, eta: &DMatrix<f64>, a: usize) -> (Vec<BlockVar>, Vec<f64>) {
        let budget: f64 = model.assoc.served_users[a].iter().map(|&k| eta[(k, a)] * model.gamma(k, a)).sum();
        let vars: Vec<BlockVar> = model.assoc.served_users[a]
            .iter()
            .map(|&k| BlockVar {
                user: k,
                ap: a,
                scale: budget / model.gamma(k, a),
            })
            .collect();
        let x0 = vars.iter().map(|v| eta[(v.user, a)] / v.scale).collect();
        (vars, x0)
    }

    fn eta_at(eta: &DMatrix<f64>, vars: &[BlockVar], x: &[f64]) -> DMatrix<f64> {
        let mut e = eta.clone();
        for (v, &xi) in vars.iter().zip(x) {
            e[(v.user, v.ap)] = v.scale * xi;
        }
        e
    }

    fn setup(max_rice: f64, seed: u64) -> (SeModel, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fx = Fixture::new(4, 3, vec![0, 1, 0, 1], 2);
        fx.max_rice = max_rice;
        let model = fx.build(associate_cf(3, 4), &mut rng);
        let eta = ppa_dl(&model.gamma_matrix(), &model.assoc, &[Role::Gue; 4], &[1.0; 3], None).unwrap();
        (model, eta)
    }

    #[test]
    fn forms_reproduce_closed_form_terms() {
        let (model, eta) = setup(4.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for a in 0..3 {
            let (vars, _) = block_vars(&model, &eta, a);
            let forms = dl_block_forms(&model, &eta, &vars, false);
            for _ in 0..20 {
                let x: Vec<f64> = (0..vars.len()).map(|_| rng.random::<f64>() / 4.0).collect();
                let e = eta_at(&eta, &vars, &x);
                for (k, (num, den)) in forms.iter().enumerate() {
                    let t = model.dl_terms(k, &e);
                    let d = t.denominator();
                    assert!((den.value(&x) - d).abs() < 1e-10 * d, "user {k}");
                    assert!((num.value(&x) - d - t.desired).abs() < 1e-10 * (d + t.desired));
                }
            }
        }
    }

    #[test]
    fn forms_without_uncertainty_omit_it() {
        let (model, eta) = setup(4.0, 5);
        let (vars, x0) = block_vars(&model, &eta, 1);
        let forms = dl_block_forms(&model, &eta, &vars, true);
        for (k, (_, den)) in forms.iter().enumerate() {
            let t = model.dl_terms(k, &eta);
            assert!((den.value(&x0) - (t.denominator() - t.uncertainty)).abs() < 1e-10 * t.denominator());
        }
    }

    #[test]
    fn surrogate_is_tight_at_anchor() {
        let (model, eta) = setup(4.0, 6);
        for a in 0..3 {
            let (vars, x0) = block_vars(&model, &eta, a);
            for (k, (num, den)) in dl_block_forms(&model, &eta, &vars, false).iter().enumerate() {
                let s = ConcaveRate::new(num, den, &x0, model.frame.dl_prelog());
                let want = model.se_lb_dl(k, &eta).unwrap();
                assert!((s.value(&x0) - want).abs() < 1e-9 * want.max(1e-3), "{} vs {want}", s.value(&x0));
            }
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let (model, eta) = setup(4.0, 7);
        let (vars, x0) = block_vars(&model, &eta, 0);
        let x: Vec<f64> = x0.iter().map(|v| v * 0.8 + 0.02).collect();
        for (num, den) in dl_block_forms(&model, &eta, &vars, false) {
            let s = ConcaveRate::new(&num, &den, &x0, 0.5);
            let g = s.gradient(&x);
            let h = s.hessian(&x);
            for i in 0..x.len() {
                let step = 1e-6 * x[i];
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += step;
                xm[i] -= step;
                let fd = (s.value(&xp) - s.value(&xm)) / (2.0 * step);
                assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-8), "{fd} vs {}", g[i]);
                let (gp, gm) = (s.gradient(&xp), s.gradient(&xm));
                for j in 0..x.len() {
                    let fd2 = (gp[j] - gm[j]) / (2.0 * step);
                    assert!((fd2 - h[(i, j)]).abs() <= 1e-4 * h[(i, j)].abs().max(1e-6));
                }
            }
        }
    }

    #[test]
    fn surrogate_minorizes_rayleigh_rates() {
        // Without LOS every cross term is non-negative, so the linearized
        // log-denominator is a true upper bound.
        let (model, eta) = setup(0.0, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for a in 0..3 {
            let (vars, x0) = block_vars(&model, &eta, a);
            let forms = dl_block_forms(&model, &eta, &vars, false);
            for (num, den) in &forms {
                assert!(den.sqrt.iter().all(|&q| q >= 0.0));
                assert!(num.sqrt.iter().all(|&q| q >= 0.0));
            }
            for _ in 0..100 {
                let raw: Vec<f64> = (0..vars.len()).map(|_| rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum::<f64>() * (1.0 + rng.random::<f64>());
                let x: Vec<f64> = raw.iter().map(|v| v / total).collect();
                let e = eta_at(&eta, &vars, &x);
                for (k, (num, den)) in forms.iter().enumerate() {
                    let s = ConcaveRate::new(num, den, &x0, model.frame.dl_prelog());
                    let truth = model.se_lb_dl(k, &e).unwrap();
                    assert!(s.value(&x) <= truth + 1e-9, "user {k}: {} > {truth}", s.value(&x));
                }
            }
        }
    }

    #[test]
    fn minorant_stays_below_and_touches() {
        let f = SeparableForm {
            constant: 3.0,
            lin: vec![0.5, 1.0],
            sqrt: vec![-1.0, 2.0],
        };
        let x0 = [0.25, 0.5];
        let m = f.concave_minorant(&x0);
        assert!((m.value(&x0) - f.value(&x0)).abs() < 1e-15);
        for i in 0..50 {
            let x = [i as f64 / 25.0, 0.3];
            assert!(m.value(&x) <= f.value(&x) + 1e-15);
        }
        assert!(m.sqrt.iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn ul_forms_match_closed_form() {
        let (model, _) = setup(4.0, 10);
        let lin = UlLinearModel::new(&model);
        let p = vec![0.1, 0.05, 0.2, 0.08];
        for k in 0..4 {
            let t = model.ul_terms(k, &p);
            assert!((lin.sinr(k, &p) - t.sinr().unwrap()).abs() < 1e-12 * t.sinr().unwrap());
        }
        let users = [1, 3];
        let scale = [0.2, 0.2];
        let forms = ul_affine_forms(&lin, &p, &users, &scale);
        let x = [0.3, 0.9];
        let mut q = p.clone();
        q[1] = 0.06;
        q[3] = 0.18;
        for (k, (num, den)) in forms.iter().enumerate() {
            let t = model.ul_terms(k, &q);
            assert!((den.value(&x) - t.denominator()).abs() < 1e-12 * t.denominator());
            assert!((num.value(&x) - t.denominator() - t.desired).abs() < 1e-12 * t.denominator());
        }
    }
}
