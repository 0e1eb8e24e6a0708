//! Complex linear-algebra aliases and small helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Circularly-symmetric complex Gaussian with the given variance.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

pub fn cn_vector<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> CVec {
    CVec::from_fn(n, |_, _| cn(rng, variance))
}

/// `xᴴ M x`.
pub fn quad_form(x: &CVec, m: &CMat) -> C64 {
    x.dotc(&(m * x))
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMat, rel_tol: f64) -> bool {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    m.is_square() && max_abs(&(m - m.adjoint())) <= rel_tol * scale
}

/// Solve `A X = B` for Hermitian positive-definite `A`, rejecting systems
/// whose condition number exceeds `max_cond`.
pub fn hpd_solve(a: &CMat, b: &CMat, max_cond: f64) -> Result<CMat> {
    let eig = a.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) || hi / lo > max_cond {
        return Err(Error::Numerical(format!(
            "matrix is not safely positive definite (eigenvalues in [{lo:e}, {hi:e}])"
        )));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}
