//! Dense complex matrix helpers on top of faer.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn diag(d: &[C64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) })
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) })
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn scale(m: &CMat, s: C64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn scale_real(m: &CMat, s: f64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn add_identity(m: &CMat, s: f64) -> CMat {
    let mut out = m.clone();
    for i in 0..m.nrows().min(m.ncols()) {
        out[(i, i)] += s;
    }
    out
}

/// `(m + m^†) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for v in m.col_as_slice(j) {
            best = best.max(v.norm());
        }
    }
    best
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for (x, y) in a.col_as_slice(j).iter().zip(b.col_as_slice(j)) {
            best = best.max((x - y).norm());
        }
    }
    best
}

pub fn asymmetry(m: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j.min(m.nrows().saturating_sub(1)) {
            best = best.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    best
}

/// Eigenvalues (ascending) and eigenvectors of the Hermitian part of `m`.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let h = hermitian_part(m);
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::LinAlg(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn eigvalsh(m: &CMat) -> Result<Vec<f64>> {
    hermitian_part(m).self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::LinAlg(format!("{e:?}")))
}

pub fn eigmin(m: &CMat) -> Result<f64> {
    Ok(eigvalsh(m)?.first().copied().unwrap_or(0.0))
}

/// Applies a real function to the spectrum of the Hermitian part of `m`.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, u) = eigh(m)?;
    Ok(from_eig(&vals.iter().map(|&v| f(v)).collect::<Vec<_>>(), &u))
}

pub fn from_eig(vals: &[f64], u: &CMat) -> CMat {
    let n = vals.len();
    let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * vals[j]);
    &scaled * u.adjoint()
}

pub fn inverse(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

/// Hermitian positive definite square root and inverse square root.
pub fn sqrt_and_inv_sqrt(m: &CMat) -> Result<(CMat, CMat)> {
    let (vals, u) = eigh(m)?;
    let min = vals.first().copied().unwrap_or(0.0);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    let s: Vec<f64> = vals.iter().map(|v| v.sqrt()).collect();
    let si: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    Ok((from_eig(&s, &u), from_eig(&si, &u)))
}

/// Assembles `[[a, b], [c, d]]` from equal-size square blocks.
pub fn block2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let n = a.nrows();
    Mat::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, bj) = (i / n, j / n);
        let (ii, jj) = (i % n, j % n);
        match (bi, bj) {
            (0, 0) => a[(ii, jj)],
            (0, 1) => b[(ii, jj)],
            (1, 0) => c[(ii, jj)],
            _ => d[(ii, jj)],
        }
    })
}

/// Extracts block `(bi, bj)` of a 2×2 block matrix.
pub fn block(m: &CMat, bi: usize, bj: usize) -> CMat {
    let n = m.nrows() / 2;
    m.submatrix(bi * n, bj * n, n, n).to_owned()
}

pub fn block_diag(a: &CMat, d: &CMat) -> CMat {
    let z = zeros(a.nrows(), a.nrows());
    block2(a, &z, &z, d)
}

/// The charge form `[[0, 1], [1, 0]]` on `C^n ⊗ C^2`.
pub fn charge(n: usize) -> CMat {
    let (z, i) = (zeros(n, n), identity(n));
    block2(&z, &i, &i, &z)
}

/// `diag(1, -1)` on `C^n ⊗ C^2`.
pub fn charge_diag(n: usize) -> CMat {
    let (i, m) = (identity(n), scale_real(&identity(n), -1.0));
    block_diag(&i, &m)
}

pub fn col_vec(v: &[C64]) -> CMat {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn col_to_vec(m: &CMat, j: usize) -> Vec<C64> {
    m.col_as_slice(j).to_vec()
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced 1-norm (max column sum).
pub fn norm_one(m: &CMat) -> f64 {
    (0..m.ncols()).map(|j| m.col_as_slice(j).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(x) v` by scaled truncated Taylor series, `v` holding columns.
pub fn expm_action(x: &CMat, v: &CMat) -> CMat {
    let norm = norm_one(x);
    let steps = norm.ceil().max(1.0) as usize;
    let xs = scale_real(x, 1.0 / steps as f64);
    let mut out = v.clone();
    for _ in 0..steps {
        let mut term = out.clone();
        let mut acc = out.clone();
        let base = max_abs(&acc).max(f64::MIN_POSITIVE);
        for k in 1..=60 {
            term = scale_real(&(&xs * &term), 1.0 / k as f64);
            acc += &term;
            if max_abs(&term) <= 1e-17 * base {
                break;
            }
        }
        out = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> CMat {
        Mat::from_fn(n, n, |i, j| C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64))
    }

    #[test]
    fn sqrt_squares_back() {
        let a = sample(6);
        let h = &a * a.adjoint() + identity(6);
        let (s, si) = sqrt_and_inv_sqrt(&h).unwrap();
        assert!(max_abs_diff(&(&s * &s), &h) < 1e-10);
        assert!(max_abs_diff(&(&s * &si), &identity(6)) < 1e-12);
    }

    #[test]
    fn blocks_roundtrip() {
        let a = sample(3);
        let b = scale_real(&a, 2.0);
        let m = block2(&a, &b, &b, &a);
        assert_eq!(max_abs_diff(&block(&m, 0, 1), &b), 0.0);
        assert_eq!(max_abs_diff(&block(&m, 1, 1), &a), 0.0);
    }

    #[test]
    fn exp_action_matches_eigen() {
        let a = sample(6);
        let h = hermitian_part(&(&a + a.adjoint()));
        let (vals, u) = eigh(&h).unwrap();
        // exp(i h) from the spectrum, real and imaginary parts separately
        let c = from_eig(&vals.iter().map(|v| v.cos()).collect::<Vec<_>>(), &u);
        let s = from_eig(&vals.iter().map(|v| v.sin()).collect::<Vec<_>>(), &u);
        let exact = &c + scale(&s, C64::new(0.0, 1.0));
        let got = expm_action(&scale(&h, C64::new(0.0, 1.0)), &identity(6));
        assert!(max_abs_diff(&got, &exact) < 1e-12);
    }

    #[test]
    fn inverse_is_inverse() {
        let a = add_identity(&sample(5), 10.0);
        assert!(max_abs_diff(&(&a * inverse(&a)), &identity(5)) < 1e-12);
    }
}
