//! Interior-point solver for `max t  s.t.  f_k(x) ≥ t`, `x ≥ 0` and either
//! `Σx ≤ 1` or `x ≤ 1`, with every `f_k` a [`ConcaveRate`].
//!
//! Log-barrier path following: each centering step maximizes
//! `s·t + Σ ln(f_k - t) + Σ ln x_i + ln(domain slack)` by damped Newton.

use nalgebra::{DMatrix, DVector};

use super::surrogate::ConcaveRate;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// `x ≥ 0`, `Σx ≤ 1`.
    Simplex,
    /// `0 ≤ x ≤ 1`.
    Box,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSolution {
    pub x: Vec<f64>,
    /// Smallest surrogate value at `x`.
    pub t: f64,
    /// Dual estimates of the rate constraints; they sum to one at the optimum.
    pub multipliers: Vec<f64>,
    pub newton_steps: usize,
    /// False when the anchor was already optimal and is returned unchanged.
    pub improved: bool,
}

const BARRIER_GROWTH: f64 = 8.0;
const NEWTON_TOL: f64 = 1e-9;
const MAX_NEWTON: usize = 200;

struct Problem<'a> {
    rates: &'a [ConcaveRate],
    domain: Domain,
    n: usize,
}

impl Problem<'_> {
    fn n_constraints(&self) -> usize {
        self.rates.len()
            + self.n
            + match self.domain {
                Domain::Simplex => 1,
                Domain::Box => self.n,
            }
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v > 0.0)
            && match self.domain {
                Domain::Simplex => x.iter().sum::<f64>() < 1.0,
                Domain::Box => x.iter().all(|&v| v < 1.0),
            }
    }

    fn min_rate(&self, x: &[f64]) -> f64 {
        self.rates.iter().map(|r| r.value(x)).fold(f64::INFINITY, f64::min)
    }

    /// Barrier objective, `-inf` outside the interior.
    fn barrier(&self, x: &[f64], t: f64, s: f64) -> f64 {
        if !self.in_domain(x) {
            return f64::NEG_INFINITY;
        }
        let mut v = s * t;
        for r in self.rates {
            let slack = r.value(x) - t;
            if !(slack > 0.0) {
                return f64::NEG_INFINITY;
            }
            v += slack.ln();
        }
        v += x.iter().map(|xi| xi.ln()).sum::<f64>();
        v += match self.domain {
            Domain::Simplex => (1.0 - x.iter().sum::<f64>()).ln(),
            Domain::Box => x.iter().map(|xi| (1.0 - xi).ln()).sum(),
        };
        v
    }

    /// Gradient and negated Hessian of the barrier in `(x, t)`.
    fn derivatives(&self, x: &[f64], t: f64, s: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = DVector::zeros(n + 1);
        let mut h = DMatrix::zeros(n + 1, n + 1);
        g[n] = s;
        for r in self.rates {
            let slack = r.value(x) - t;
            let grad = r.gradient(x);
            let hess = r.hessian(x);
            for i in 0..n {
                g[i] += grad[i] / slack;
            }
            g[n] -= 1.0 / slack;
            let s2 = slack * slack;
            for i in 0..=n {
                let vi = if i < n { grad[i] } else { -1.0 };
                for j in 0..=n {
                    let vj = if j < n { grad[j] } else { -1.0 };
                    let curv = if i < n && j < n { hess[(i, j)] / slack } else { 0.0 };
                    h[(i, j)] += vi * vj / s2 - curv;
                }
            }
        }
        for i in 0..n {
            g[i] += 1.0 / x[i];
            h[(i, i)] += 1.0 / (x[i] * x[i]);
        }
        match self.domain {
            Domain::Simplex => {
                let slack = 1.0 - x.iter().sum::<f64>();
                for i in 0..n {
                    g[i] -= 1.0 / slack;
                    for j in 0..n {
                        h[(i, j)] += 1.0 / (slack * slack);
                    }
                }
            }
            Domain::Box => {
                for i in 0..n {
                    let slack = 1.0 - x[i];
                    g[i] -= 1.0 / slack;
                    h[(i, i)] += 1.0 / (slack * slack);
                }
            }
        }
        (g, h)
    }

    fn interior_start(&self, anchor: &[f64]) -> Option<Vec<f64>> {
        let mut base: Vec<f64> = anchor.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        let center = match self.domain {
            Domain::Simplex => {
                let total: f64 = base.iter().sum();
                if total > 1.0 {
                    base.iter_mut().for_each(|v| *v /= total);
                }
                1.0 / (self.n + 1) as f64
            }
            Domain::Box => 0.5,
        };
        [0.1, 0.3, 1.0].iter().find_map(|&lam| {
            let x: Vec<f64> = base.iter().map(|&b| (1.0 - lam) * b + lam * center).collect();
            (self.in_domain(&x) && self.min_rate(&x).is_finite()).then_some(x)
        })
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += reg;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

/// Maximize the smallest of `rates` over the domain, warm-started near `anchor`.
///
/// When no point beats the anchor by more than `tol`, the anchor itself is
/// returned so repeated solves stay put at an optimum.
pub fn solve_block_subproblem(rates: &[ConcaveRate], anchor: &[f64], domain: Domain, tol: f64) -> Result<BlockSolution> {
    let n = anchor.len();
    if n == 0 || rates.iter().any(|r| r.dim() != n) {
        return Err(Error::Numerical("block subproblem has mismatched dimensions".into()));
    }
    let prob = Problem { rates, domain, n };
    let mut x = prob
        .interior_start(anchor)
        .ok_or_else(|| Error::Numerical("no interior starting point for the block subproblem".into()))?;
    let mut t = prob.min_rate(&x) - 1.0;
    let m_total = prob.n_constraints() as f64;
    let mut s = 1.0;
    let mut steps = 0;
    loop {
        for _ in 0..MAX_NEWTON {
            let (g, h) = prob.derivatives(&x, t, s);
            let Some(d) = newton_direction(&g, &h) else { break };
            let decrement = g.dot(&d);
            if !(decrement / 2.0 > NEWTON_TOL) {
                break;
            }
            steps += 1;
            let f0 = prob.barrier(&x, t, s);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-16 {
                let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(xi, di)| xi + alpha * di).collect();
                let tn = t + alpha * d[n];
                if prob.barrier(&xn, tn, s) >= f0 + 0.25 * alpha * decrement {
                    x = xn;
                    t = tn;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if m_total / s < tol {
            break;
        }
        s *= BARRIER_GROWTH;
    }
    let multipliers: Vec<f64> = rates.iter().map(|r| 1.0 / (s * (r.value(&x) - t))).collect();
    let t_star = prob.min_rate(&x);
    if !t_star.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("block subproblem diverged".into()));
    }
    let t_anchor = prob.min_rate(anchor);
    let anchor_ok = anchor.iter().all(|&v| v >= 0.0)
        && match domain {
            Domain::Simplex => anchor.iter().sum::<f64>() <= 1.0 + 1e-12,
            Domain::Box => anchor.iter().all(|&v| v <= 1.0 + 1e-12),
        };
    if anchor_ok && t_anchor.is_finite() && t_star <= t_anchor + tol * t_anchor.abs().max(1.0) {
        return Ok(BlockSolution {
            x: anchor.to_vec(),
            t: t_anchor,
            multipliers,
            newton_steps: steps,
            improved: false,
        });
    }
    Ok(BlockSolution {
        x,
        t: t_star,
        multipliers,
        newton_steps: steps,
        improved: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_control::surrogate::SeparableForm;

    /// `prelog [log2(c + l x + q sqrt x) - offset - slope·x]` in one variable.
    fn rate1(c: f64, l: f64, q: f64, slope: f64) -> ConcaveRate {
        ConcaveRate {
            num: SeparableForm {
                constant: c,
                lin: vec![l],
                sqrt: vec![q],
            },
            offset: 0.0,
            slope: vec![slope],
            prelog: 1.0,
        }
    }

    fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
            if f(a) < f(b) {
                lo = a
            } else {
                hi = b
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn one_dimensional_matches_golden_section() {
        // concave with an interior maximum: rises through the log, falls through the slope
        let r = rate1(1.0, 3.0, 2.0, 2.5);
        let sol = solve_block_subproblem(std::slice::from_ref(&r), &[0.05], Domain::Box, 1e-10).unwrap();
        let xg = golden_max(|x| r.value(&[x]), 0.0, 1.0);
        assert!((sol.x[0] - xg).abs() < 1e-4, "{} vs {xg}", sol.x[0]);
        assert!((sol.t - r.value(&[xg])).abs() < 1e-8);
        assert!(sol.improved);
    }

    #[test]
    fn monotone_rate_goes_to_the_budget_edge() {
        let r = rate1(1.0, 4.0, 0.0, 0.0);
        let sol = solve_block_subproblem(std::slice::from_ref(&r), &[0.2], Domain::Simplex, 1e-9).unwrap();
        assert!(sol.x[0] > 1.0 - 1e-6 && sol.x[0] < 1.0);
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kkt_balance_on_two_users() {
        // f1 = log2(1 + 4 x1) - 2 x2, f2 = log2(1 + 4 x2) - 2 x1
        let f1 = ConcaveRate {
            num: SeparableForm {
                constant: 1.0,
                lin: vec![4.0, 0.0],
                sqrt: vec![0.0, 0.0],
            },
            offset: 0.0,
            slope: vec![0.0, 2.0],
            prelog: 1.0,
        };
        let f2 = ConcaveRate {
            num: SeparableForm {
                constant: 1.0,
                lin: vec![0.0, 4.0],
                sqrt: vec![0.0, 0.0],
            },
            offset: 0.0,
            slope: vec![2.0, 0.0],
            prelog: 1.0,
        };
        let rates = [f1, f2];
        let sol = solve_block_subproblem(&rates, &[0.1, 0.2], Domain::Box, 1e-10).unwrap();
        // symmetric optimum: 4 / ((1 + 4x) ln 2) = 2  →  x = 1/(2 ln 2) - 1/4
        let want = 1.0 / (2.0 * std::f64::consts::LN_2) - 0.25;
        for &xi in &sol.x {
            assert!((xi - want).abs() < 1e-5, "{xi} vs {want}");
        }
        for &l in &sol.multipliers {
            assert!((l - 0.5).abs() < 1e-4);
        }
        // stationarity of the Lagrangian Σ λ_k ∇f_k at the interior point
        let mut grad = [0.0; 2];
        for (r, l) in rates.iter().zip(&sol.multipliers) {
            let g = r.gradient(&sol.x);
            grad[0] += l * g[0];
            grad[1] += l * g[1];
        }
        assert!(grad[0].abs() < 1e-4 && grad[1].abs() < 1e-4);
    }

    #[test]
    fn optimal_anchor_is_returned_unchanged() {
        let r = rate1(1.0, 3.0, 2.0, 2.5);
        let first = solve_block_subproblem(std::slice::from_ref(&r), &[0.05], Domain::Box, 1e-10).unwrap();
        let again = solve_block_subproblem(std::slice::from_ref(&r), &first.x, Domain::Box, 1e-7).unwrap();
        assert!(!again.improved);
        assert_eq!(again.x, first.x);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let r = rate1(1.0, 1.0, 0.0, 0.0);
        assert!(solve_block_subproblem(&[r], &[0.1, 0.1], Domain::Box, 1e-8).is_err());
    }
}
