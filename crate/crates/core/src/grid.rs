//! Torus discretization, unitary Fourier transforms, spectral derivatives and
//! the Fourier-basis decay diagnostic.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

struct GridInner {
    n: usize,
    length: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform grid on a torus of circumference `length` with `n` nodes.
#[derive(Clone)]
pub struct SpatialGrid(Arc<GridInner>);

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid").field("n", &self.n()).field("length", &self.length()).finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n() && self.length() == other.length()
    }
}

impl SpatialGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} must be a power of two and at least 8")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length = {length} must be positive")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self(Arc::new(GridInner { n, length, forward, inverse })))
    }

    pub fn periodic_2pi(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * PI)
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn length(&self) -> f64 {
        self.0.length
    }

    pub fn dx(&self) -> f64 {
        self.0.length / self.0.n as f64
    }

    /// Wavenumber spacing `2π/L`.
    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.0.length
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.node(j)).collect()
    }

    /// Signed mode number of FFT-ordered index `idx`, in `[-n/2, n/2)`.
    pub fn mode(&self, idx: usize) -> i64 {
        let n = self.n();
        if idx < n / 2 {
            idx as i64
        } else {
            idx as i64 - n as i64
        }
    }

    pub fn index_of_mode(&self, m: i64) -> usize {
        m.rem_euclid(self.n() as i64) as usize
    }

    pub fn wavenumber(&self, idx: usize) -> f64 {
        self.kappa() * self.mode(idx) as f64
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.wavenumber(i)).collect()
    }

    /// Unitary forward DFT in place (FFT ordering).
    pub fn fft(&self, buf: &mut [C64]) {
        self.0.forward.process(buf);
        let s = 1.0 / (self.n() as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
    }

    /// Unitary inverse DFT in place.
    pub fn ifft(&self, buf: &mut [C64]) {
        self.0.inverse.process(buf);
        let s = 1.0 / (self.n() as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
    }

    /// Fourier coefficients `ĉ(ν)` with `c(x) = Σ ĉ(ν) e^{iνκx}` (FFT ordering).
    pub fn series_coefficients(&self, values: &[C64]) -> Vec<C64> {
        let mut buf = values.to_vec();
        self.0.forward.process(&mut buf);
        let s = 1.0 / self.n() as f64;
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    fn check(&self, other: &SpatialGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Complex samples of a function at the grid nodes.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: SpatialGrid,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn new(grid: &SpatialGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::SizeMismatch { expected: grid.n(), found: values.len() });
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &SpatialGrid) -> Self {
        Self { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.n()] }
    }

    pub fn constant(grid: &SpatialGrid, c: C64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.n()] }
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(f64) -> C64) -> Self {
        Self { grid: grid.clone(), values: grid.nodes().into_iter().map(f).collect() }
    }

    pub fn from_real_fn(grid: &SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn from_real(grid: &SpatialGrid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.grid.check(&other.grid)?;
        Ok(Self { grid: self.grid.clone(), values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    /// Discrete L² norm `(Σ |f_j|² dx)^{1/2}`.
    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx()).sqrt()
    }

    /// Discrete L² inner product, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        linalg::dot(&self.values, &other.values) * self.grid.dx()
    }

    /// Unitary DFT coefficients in FFT ordering.
    pub fn fourier(&self) -> Self {
        let mut v = self.values.clone();
        self.grid.fft(&mut v);
        Self { grid: self.grid.clone(), values: v }
    }

    pub fn inverse_fourier(&self) -> Self {
        let mut v = self.values.clone();
        self.grid.ifft(&mut v);
        Self { grid: self.grid.clone(), values: v }
    }

    /// `∂_x^order f`; Nyquist mode zeroed for odd orders.
    pub fn spectral_derivative(&self, order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("derivative order must be at least 1".into()));
        }
        let g = &self.grid;
        let mut v = self.values.clone();
        g.fft(&mut v);
        let n = g.n();
        for (idx, c) in v.iter_mut().enumerate() {
            if order % 2 == 1 && idx == n / 2 {
                *c = C64::new(0.0, 0.0);
                continue;
            }
            *c *= C64::new(0.0, g.wavenumber(idx)).powu(order);
        }
        g.ifft(&mut v);
        Ok(Self { grid: g.clone(), values: v })
    }

    /// `D_x^order f` with `D_x = -i ∂_x`.
    pub fn d_x(&self, order: u32) -> Result<Self> {
        if order == 0 {
            return Ok(self.clone());
        }
        let f = self.spectral_derivative(order)?;
        Ok(f.scale(C64::new(0.0, -1.0).powu(order)))
    }

    /// Trigonometric interpolation at an arbitrary point; the Nyquist mode is
    /// split symmetrically so real data interpolate to real values.
    pub fn interpolate(&self, x: f64) -> C64 {
        let g = &self.grid;
        let c = g.series_coefficients(&self.values);
        let n = g.n();
        let mut acc = C64::new(0.0, 0.0);
        for (idx, ci) in c.iter().enumerate() {
            if idx == n / 2 {
                let k = g.kappa() * (n / 2) as f64;
                acc += ci * (k * x).cos();
            } else {
                acc += ci * C64::from_polar(1.0, g.wavenumber(idx) * x);
            }
        }
        acc
    }
}

/// Dense operator on grid functions in the nodal basis.
#[derive(Clone, Debug)]
pub struct GridOperator {
    grid: SpatialGrid,
    mat: CMat,
}

fn transform_columns(grid: &SpatialGrid, m: &mut CMat, forward: bool) {
    for j in 0..m.ncols() {
        let col = m.col_as_slice_mut(j);
        if forward {
            grid.fft(col);
        } else {
            grid.ifft(col);
        }
    }
}

/// `F A F^†` for the unitary DFT `F` (FFT ordering on both sides).
pub fn to_fourier_basis(grid: &SpatialGrid, a: &CMat) -> CMat {
    let mut x = a.clone();
    transform_columns(grid, &mut x, true);
    // rows of x get the inverse transform: transpose, transform columns, transpose back
    let mut t = x.transpose().to_owned();
    transform_columns(grid, &mut t, false);
    t.transpose().to_owned()
}

/// `F^† M F`, the inverse of [`to_fourier_basis`].
pub fn from_fourier_basis(grid: &SpatialGrid, m: &CMat) -> CMat {
    let mut x = m.clone();
    transform_columns(grid, &mut x, false);
    let mut t = x.transpose().to_owned();
    transform_columns(grid, &mut t, true);
    t.transpose().to_owned()
}

impl GridOperator {
    pub fn new(grid: &SpatialGrid, mat: CMat) -> Result<Self> {
        if mat.nrows() != grid.n() || mat.ncols() != grid.n() {
            return Err(Error::SizeMismatch { expected: grid.n(), found: mat.nrows().max(mat.ncols()) });
        }
        if !mat_is_finite(&mat) {
            return Err(Error::InvalidArgument("operator has non-finite entries".into()));
        }
        Ok(Self { grid: grid.clone(), mat })
    }

    pub(crate) fn from_parts(grid: &SpatialGrid, mat: CMat) -> Self {
        debug_assert_eq!(mat.nrows(), grid.n());
        Self { grid: grid.clone(), mat }
    }

    pub fn identity(grid: &SpatialGrid) -> Self {
        Self::from_parts(grid, linalg::identity(grid.n()))
    }

    pub fn zeros(grid: &SpatialGrid) -> Self {
        Self::from_parts(grid, linalg::zeros(grid.n(), grid.n()))
    }

    pub fn multiplication(f: &GridFunction) -> Self {
        Self::from_parts(f.grid(), linalg::diag(f.values()))
    }

    /// Fourier multiplier `σ(D_x)` given as a function of the wavenumber.
    pub fn fourier_multiplier(grid: &SpatialGrid, sigma: impl Fn(f64) -> C64) -> Self {
        let d: Vec<C64> = (0..grid.n()).map(|i| sigma(grid.wavenumber(i))).collect();
        Self::from_fourier(grid, &linalg::diag(&d))
    }

    /// Builds the nodal operator from its Fourier-basis matrix.
    pub fn from_fourier(grid: &SpatialGrid, m: &CMat) -> Self {
        Self::from_parts(grid, from_fourier_basis(grid, m))
    }

    pub fn fourier_matrix(&self) -> CMat {
        to_fourier_basis(&self.grid, &self.mat)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    pub fn adjoint(&self) -> Self {
        Self::from_parts(&self.grid, linalg::adjoint(&self.mat))
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.grid.check(f.grid())?;
        let col = linalg::col_vec(f.values());
        let out = &self.mat * &col;
        GridFunction::new(&self.grid, linalg::col_to_vec(&out, 0))
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.grid.check(&other.grid)?;
        Ok(Self::from_parts(&self.grid, &self.mat * &other.mat))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.check(&other.grid)?;
        Ok(Self::from_parts(&self.grid, &self.mat + &other.mat))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.grid.check(&other.grid)?;
        Ok(Self::from_parts(&self.grid, &self.mat - &other.mat))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_parts(&self.grid, linalg::scale(&self.mat, s))
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.mat)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        linalg::max_abs_diff(&self.mat, &other.mat)
    }
}

fn mat_is_finite(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| m.col_as_slice(j).iter().all(|v| v.re.is_finite() && v.im.is_finite()))
}

/// Options for [`smoothing_decay_diagnostic_with`].
#[derive(Clone, Copy, Debug)]
pub struct DecayOptions {
    /// Modes within `guard` of Nyquist are excluded; defaults to `n/8`.
    pub guard: Option<usize>,
    /// Band maxima at or below this absolute level count as unresolved.
    pub floor: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { guard: None, floor: 0.0 }
    }
}

/// Band-wise suprema of Fourier-basis matrix elements and their log-log slope.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub bands: Vec<usize>,
    pub sup: Vec<f64>,
    /// Bands whose maximum lies above the floor; only these enter the fit.
    pub resolved: Vec<bool>,
    pub floor: f64,
    /// Least-squares slope of `log S` against `log K`; `-inf` when fewer than
    /// two bands are resolved.
    pub slope: f64,
    pub residual: f64,
}

impl DecayReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.slope <= threshold
    }
}

pub fn smoothing_decay_diagnostic(a: &GridOperator, bands: &[usize]) -> Result<DecayReport> {
    smoothing_decay_diagnostic_with(a, bands, DecayOptions::default())
}

pub fn smoothing_decay_diagnostic_with(a: &GridOperator, bands: &[usize], opts: DecayOptions) -> Result<DecayReport> {
    let grid = a.grid();
    let n = grid.n();
    let guard = opts.guard.unwrap_or(n / 8);
    let kmax = (n / 2).saturating_sub(guard);
    if bands.is_empty() {
        return Err(Error::InvalidBands("no bands".into()));
    }
    if bands.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidBands(format!("{bands:?} not strictly increasing")));
    }
    if bands[0] == 0 || *bands.last().unwrap() > kmax {
        return Err(Error::InvalidBands(format!("{bands:?} must lie in [1, {kmax}]")));
    }
    let m = a.fourier_matrix();
    // level[κ] = max |M_pq| over max(|p|,|q|) = κ
    let mut level = vec![0.0f64; n / 2 + 1];
    for q in 0..n {
        let mq = grid.mode(q).unsigned_abs() as usize;
        for (p, v) in m.col_as_slice(q).iter().enumerate() {
            let mp = grid.mode(p).unsigned_abs() as usize;
            let k = mp.max(mq);
            level[k] = level[k].max(v.norm());
        }
    }
    let sup: Vec<f64> = bands.iter().map(|&b| level[b..=kmax].iter().cloned().fold(0.0, f64::max)).collect();
    let resolved: Vec<bool> = sup.iter().map(|&s| s > opts.floor && s > 0.0).collect();
    let pts: Vec<(f64, f64)> = bands.iter().zip(&sup).zip(&resolved).filter(|(_, &r)| r).map(|((&b, &s), _)| ((b as f64).ln(), s.ln())).collect();
    let (slope, residual) = if pts.len() < 2 { (f64::NEG_INFINITY, 0.0) } else { fit_line(&pts) };
    Ok(DecayReport { bands: bands.to_vec(), sup, resolved, floor: opts.floor, slope, residual })
}

/// Least-squares slope and RMS residual.
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let res = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
    (slope, res)
}

/// Convenience: nodal matrix of spectral `D_x` (Nyquist zeroed).
pub fn d_x_matrix(grid: &SpatialGrid) -> CMat {
    let n = grid.n();
    let d: Vec<C64> = (0..n).map(|i| if i == n / 2 { C64::new(0.0, 0.0) } else { C64::new(grid.wavenumber(i), 0.0) }).collect();
    from_fourier_basis(grid, &linalg::diag(&d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize) -> SpatialGrid {
        SpatialGrid::periodic_2pi(n).unwrap()
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(SpatialGrid::periodic_2pi(6).is_err());
        assert!(SpatialGrid::periodic_2pi(12).is_err());
        assert!(SpatialGrid::new(16, -1.0).is_err());
    }

    #[test]
    fn constant_is_dc_delta() {
        let grid = g(16);
        let f = GridFunction::constant(&grid, C64::new(1.0, 0.0)).fourier();
        assert!((f.values()[0] - C64::new(4.0, 0.0)).norm() < 1e-14);
        assert!(f.values()[1..].iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn pure_mode_single_coefficient() {
        let grid = g(32);
        let f = GridFunction::from_fn(&grid, |x| C64::from_polar(1.0, x)).fourier();
        for (i, v) in f.values().iter().enumerate() {
            if i == 1 {
                assert!((v.norm() - (32f64).sqrt()).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_of_sine() {
        let grid = SpatialGrid::new(64, 3.0).unwrap();
        let w = 2.0 * PI / 3.0;
        let f = GridFunction::from_real_fn(&grid, |x| (w * x).sin());
        let d = f.spectral_derivative(1).unwrap();
        for (x, v) in grid.nodes().iter().zip(d.values()) {
            assert!((v - C64::new(w * (w * x).cos(), 0.0)).norm() < 1e-12);
        }
        let c = GridFunction::constant(&grid, C64::new(2.5, 0.0)).spectral_derivative(2).unwrap();
        assert!(c.max_abs() < 1e-12);
    }

    #[test]
    fn derivative_eigenfunction() {
        let grid = g(32);
        let f = GridFunction::from_fn(&grid, |x| C64::from_polar(1.0, 3.0 * x));
        let d = f.spectral_derivative(1).unwrap();
        let expect = f.scale(C64::new(0.0, 3.0));
        assert!(d.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_modes() {
        let grid = g(32);
        let f = GridFunction::from_real_fn(&grid, |x| 1.0 + (2.0 * x).cos() - 0.5 * (5.0 * x).sin());
        let x = 0.3217;
        let v = f.interpolate(x);
        assert!((v.re - (1.0 + (2.0 * x).cos() - 0.5 * (5.0 * x).sin())).abs() < 1e-12);
        assert!(v.im.abs() < 1e-12);
    }

    #[test]
    fn fourier_basis_roundtrip() {
        let grid = g(16);
        let a = CMat::from_fn(16, 16, |i, j| C64::new((i * j % 7) as f64, (i + j) as f64 * 0.1));
        let back = from_fourier_basis(&grid, &to_fourier_basis(&grid, &a));
        assert!(linalg::max_abs_diff(&a, &back) < 1e-12);
    }

    #[test]
    fn identity_has_flat_profile() {
        let grid = g(64);
        let r = smoothing_decay_diagnostic(&GridOperator::identity(&grid), &[2, 4, 8, 16]).unwrap();
        assert!(r.sup.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(r.slope.abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_reports_neg_infinity() {
        let grid = g(32);
        let r = smoothing_decay_diagnostic(&GridOperator::zeros(&grid), &[2, 4, 8]).unwrap();
        assert_eq!(r.slope, f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_bands_beyond_guard() {
        let grid = g(32);
        assert!(smoothing_decay_diagnostic(&GridOperator::identity(&grid), &[4, 16]).is_err());
        assert!(smoothing_decay_diagnostic(&GridOperator::identity(&grid), &[8, 4]).is_err());
    }

    #[test]
    fn d_x_matrix_matches_derivative() {
        let grid = g(32);
        let d = GridOperator::new(&grid, d_x_matrix(&grid)).unwrap();
        let f = GridFunction::from_real_fn(&grid, |x| (3.0 * x).cos());
        let lhs = d.apply(&f).unwrap();
        let rhs = f.d_x(1).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }
}
