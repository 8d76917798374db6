//! Two-point functions on Cauchy data: canonical and Hadamard families,
//! positivity, purity and smoothing checks, the group action, static states
//! and partition-of-unity gluing.

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{smoothing_decay_diagnostic_with, DecayOptions, GridFunction, GridOperator, SpatialGrid};
use crate::linalg::{self, CMat};
use crate::parametrix::build_t;
use crate::symbol::cutoff;

/// Relative tolerance for Hermiticity of a block covariance.
const HERM_TOL: f64 = 1e-9;

/// `λ ≡ λ₊` as a `2n × 2n` Hermitian block matrix; `λ₋ = λ - q`.
#[derive(Clone, Debug)]
pub struct TwoPointFunction {
    grid: SpatialGrid,
    lambda: CMat,
}

impl TwoPointFunction {
    pub fn new(grid: &SpatialGrid, lambda: CMat) -> Result<Self> {
        let n = 2 * grid.n();
        if lambda.nrows() != n || lambda.ncols() != n {
            return Err(Error::SizeMismatch { expected: n, found: lambda.nrows() });
        }
        let scale = linalg::max_abs(&lambda).max(1.0);
        let asym = linalg::asymmetry(&lambda);
        if !(asym <= HERM_TOL * scale) {
            return Err(Error::NotHermitian { asym, tol: HERM_TOL * scale });
        }
        Ok(Self { grid: grid.clone(), lambda: linalg::hermitian_part(&lambda) })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn lambda(&self) -> &CMat {
        &self.lambda
    }

    pub fn lambda_minus(&self) -> CMat {
        &self.lambda - linalg::charge(self.grid.n())
    }

    pub fn block(&self, bi: usize, bj: usize) -> CMat {
        linalg::block(&self.lambda, bi, bj)
    }

    /// `(T^{-1})^† λ T^{-1}`.
    pub fn tilde(&self, t_inv: &CMat) -> CMat {
        linalg::hermitian_part(&(t_inv.adjoint() * &self.lambda * t_inv))
    }

    /// `T^† λ̃ T`.
    pub fn from_tilde(grid: &SpatialGrid, tilde: &CMat, t: &CMat) -> Result<Self> {
        Self::new(grid, t.adjoint() * tilde * t)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        linalg::max_abs_diff(&self.lambda, &other.lambda)
    }

    pub fn scale(&self) -> f64 {
        linalg::max_abs(&self.lambda).max(f64::MIN_POSITIVE)
    }
}

/// `r` with its transform `T(r)`, `T(r)^{-1}`: everything the state
/// constructions need from a parametrix.
#[derive(Clone, Debug)]
pub struct Frame {
    r: GridOperator,
    t: CMat,
    t_inv: CMat,
}

impl Frame {
    pub fn new(r: &GridOperator) -> Result<Self> {
        let (t, t_inv, _) = build_t(r)?;
        Ok(Self { r: r.clone(), t, t_inv })
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.r.grid()
    }

    pub fn r(&self) -> &GridOperator {
        &self.r
    }

    pub fn t(&self) -> &CMat {
        &self.t
    }

    pub fn t_inv(&self) -> &CMat {
        &self.t_inv
    }
}

fn inverse_hermitian_pd(s: &CMat) -> Result<CMat> {
    let (vals, u) = linalg::eigh(s)?;
    let min = vals.first().copied().unwrap_or(0.0);
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    Ok(linalg::from_eig(&vals.iter().map(|v| 1.0 / v).collect::<Vec<_>>(), &u))
}

/// `λ(r) = [[S⁻¹, S⁻¹r], [r^†S⁻¹, r^†S⁻¹r]]` with `S = r + r^†`.
pub fn canonical_state(r: &GridOperator) -> Result<TwoPointFunction> {
    let rm = r.mat();
    let si = inverse_hermitian_pd(&(rm + rm.adjoint()))?;
    let ra = rm.adjoint();
    let lam = linalg::block2(&si, &(&si * rm), &(ra * &si), &(ra * &si * rm));
    TwoPointFunction::new(r.grid(), lam)
}

/// Largest singular value.
pub fn operator_norm(m: &CMat) -> Result<f64> {
    let vals = linalg::eigvalsh(&(m.adjoint() * m))?;
    Ok(vals.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Smoothing test settings shared by the state checks.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SmoothingCheck {
    pub bands: Vec<usize>,
    /// A block passes when its fitted slope is at most this value.
    pub threshold: f64,
    /// Band maxima below `floor · scale` count as zero.
    pub floor: f64,
}

impl Default for SmoothingCheck {
    fn default() -> Self {
        Self { bands: vec![8, 16, 32, 64], threshold: -5.0, floor: 1e-12 }
    }
}

impl SmoothingCheck {
    /// Slope of `m` (nodal basis); `-inf` when every band is at the floor.
    pub fn slope(&self, grid: &SpatialGrid, m: &CMat, scale: f64) -> Result<f64> {
        let op = GridOperator::new(grid, m.clone())?;
        let opts = DecayOptions { guard: None, floor: self.floor * scale };
        Ok(smoothing_decay_diagnostic_with(&op, &self.bands, opts)?.slope)
    }
}

/// Data of a Hadamard state relative to a parametrix: `λ̃₊₊ = 1 + b^†b`,
/// `λ̃₋₋ = a^†a`, `λ̃₊₋ = b^†a₀a`.
#[derive(Clone, Debug)]
pub struct StateSpec {
    pub a_inf: CMat,
    pub b_inf: CMat,
    pub a0: CMat,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpecReport {
    pub slope_a: f64,
    pub slope_b: f64,
    pub norm_a0: f64,
    pub pass: bool,
}

impl StateSpec {
    pub fn zero(n: usize) -> Self {
        Self { a_inf: linalg::zeros(n, n), b_inf: linalg::zeros(n, n), a0: linalg::identity(n) }
    }

    pub fn validate(&self, grid: &SpatialGrid, check: &SmoothingCheck) -> Result<SpecReport> {
        let n = grid.n();
        for m in [&self.a_inf, &self.b_inf, &self.a0] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::SizeMismatch { expected: n, found: m.nrows() });
            }
        }
        let norm_a0 = operator_norm(&self.a0)?;
        let slope_a = check.slope(grid, &self.a_inf, 1.0)?;
        let slope_b = check.slope(grid, &self.b_inf, 1.0)?;
        let pass = norm_a0 <= 1.0 + 1e-12 && slope_a <= check.threshold && slope_b <= check.threshold;
        Ok(SpecReport { slope_a, slope_b, norm_a0, pass })
    }
}

fn require(report: &SpecReport) -> Result<()> {
    if report.pass {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("state spec rejected: {report:?}")))
    }
}

/// Hadamard family member for `spec`, pulled back by `λ = T^† λ̃ T`.
pub fn hadamard_family(frame: &Frame, spec: &StateSpec, check: &SmoothingCheck) -> Result<TwoPointFunction> {
    let grid = frame.grid();
    require(&spec.validate(grid, check)?)?;
    let (a, b, a0) = (&spec.a_inf, &spec.b_inf, &spec.a0);
    let pp = linalg::add_identity(&(b.adjoint() * b), 1.0);
    let pm = b.adjoint() * a0 * a;
    let mm = a.adjoint() * a;
    let tilde = linalg::block2(&pp, &pm, &pm.adjoint().to_owned(), &mm);
    TwoPointFunction::from_tilde(grid, &tilde, frame.t())
}

/// Blocks of `ũ = [[(1+aa^†)^{1/2}, a], [a^†, (1+a^†a)^{1/2}]]`.
pub fn intertwiner(a: &CMat) -> Result<CMat> {
    let sq = |m: CMat| linalg::herm_fn(&linalg::add_identity(&m, 1.0), f64::sqrt);
    let left = sq(a * a.adjoint())?;
    let right = sq(a.adjoint() * a)?;
    Ok(linalg::block2(&left, a, &a.adjoint().to_owned(), &right))
}

/// `λ̃ = ũ^† diag(1,0) ũ = [[1+aa^†, a(1+a^†a)^{1/2}], [.., a^†a]]`.
pub fn pure_tilde(a: &CMat) -> Result<CMat> {
    let right = linalg::herm_fn(&linalg::add_identity(&(a.adjoint() * a), 1.0), f64::sqrt)?;
    let pp = linalg::add_identity(&(a * a.adjoint()), 1.0);
    let pm = a * &right;
    let mm = a.adjoint() * a;
    Ok(linalg::block2(&pp, &pm, &pm.adjoint().to_owned(), &mm))
}

/// Pure Hadamard state with smoothing parameter `a`.
pub fn pure_state_from(frame: &Frame, a: &CMat, check: &SmoothingCheck) -> Result<TwoPointFunction> {
    let grid = frame.grid();
    let spec = StateSpec { a_inf: a.clone(), b_inf: linalg::zeros(grid.n(), grid.n()), a0: linalg::identity(grid.n()) };
    require(&spec.validate(grid, check)?)?;
    TwoPointFunction::from_tilde(grid, &pure_tilde(a)?, frame.t())
}

/// Residuals of the intertwiner identities, relative to `max(1, max|λ̃|)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IntertwinerReport {
    /// `a(1+a^†a)^{1/2} - (1+aa^†)^{1/2}a`
    pub swap: f64,
    /// `ũ^† q̃ ũ - q̃` with `q̃ = diag(1,-1)`
    pub charge: f64,
    /// `ũ^† diag(1,0) ũ - λ̃`
    pub tilde: f64,
}

pub fn intertwiner_check(a: &CMat) -> Result<IntertwinerReport> {
    let n = a.nrows();
    let u = intertwiner(a)?;
    let left = linalg::block(&u, 0, 0);
    let right = linalg::block(&u, 1, 1);
    let scale = linalg::max_abs(a).max(1.0).powi(2);
    let swap = linalg::max_abs_diff(&(a * &right), &(&left * a)) / scale;
    let qd = linalg::charge_diag(n);
    let charge = linalg::max_abs_diff(&(u.adjoint() * &qd * &u), &qd) / scale;
    let e1 = linalg::block_diag(&linalg::identity(n), &linalg::zeros(n, n));
    let tilde = linalg::max_abs_diff(&(u.adjoint() * &e1 * &u), &pure_tilde(a)?) / scale;
    Ok(IntertwinerReport { swap, charge, tilde })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PositivityReport {
    pub eigmin_plus: f64,
    pub eigmin_minus: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Block eigenvalue minima of `λ` and `λ - q`; tolerance `1e-10 · n · ‖λ‖`.
pub fn check_positivity(lam: &TwoPointFunction) -> Result<PositivityReport> {
    let plus = linalg::eigvalsh(lam.lambda())?;
    let minus = linalg::eigvalsh(&lam.lambda_minus())?;
    let norm = plus.iter().chain(&minus).map(|v| v.abs()).fold(1.0, f64::max);
    let tol = 1e-10 * lam.grid().n() as f64 * norm;
    let eigmin_plus = plus.first().copied().unwrap_or(0.0);
    let eigmin_minus = minus.first().copied().unwrap_or(0.0);
    Ok(PositivityReport { eigmin_plus, eigmin_minus, tol, pass: eigmin_plus >= -tol && eigmin_minus >= -tol })
}

/// Spectral norm of the Hermitian matrix `λ q⁻¹ λ - λ`.
pub fn check_purity(lam: &TwoPointFunction) -> Result<f64> {
    let q = linalg::charge(lam.grid().n());
    let l = lam.lambda();
    let vals = linalg::eigvalsh(&(l * &q * l - l))?;
    Ok(vals.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

/// Decay slopes of the four blocks `λ̃₋₋`, `λ̃₊₋`, `λ̃₋₊`, `1 - λ̃₊₊`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MuscReport {
    pub slopes: [f64; 4],
    /// Blocks whose every band sits at the floor.
    pub zero: [bool; 4],
    pub threshold: f64,
    pub pass: bool,
}

pub fn check_musc_proxy(lam: &TwoPointFunction, t_inv: &CMat, check: &SmoothingCheck) -> Result<MuscReport> {
    let grid = lam.grid();
    let n = grid.n();
    let tilde = lam.tilde(t_inv);
    let scale = lam.scale().max(1.0);
    let blocks = [linalg::block(&tilde, 1, 1), linalg::block(&tilde, 0, 1), linalg::block(&tilde, 1, 0), linalg::identity(n) - linalg::block(&tilde, 0, 0)];
    let mut slopes = [0.0; 4];
    let mut zero = [false; 4];
    for (i, b) in blocks.iter().enumerate() {
        slopes[i] = check.slope(grid, b, scale)?;
        zero[i] = linalg::max_abs(b) <= check.floor * scale;
    }
    let pass = slopes.iter().all(|&s| s <= check.threshold);
    Ok(MuscReport { slopes, zero, threshold: check.threshold, pass })
}

/// `(g, f)` with `g - 1` and `f = -f^†` smoothing.
#[derive(Clone, Debug)]
pub struct GroupElement {
    pub g: CMat,
    pub f: CMat,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroupReport {
    pub slope_g: f64,
    pub slope_f: f64,
    pub anti_hermitian: f64,
    pub condition: f64,
    pub pass: bool,
}

/// Condition numbers above this are treated as singular.
const MAX_CONDITION: f64 = 1e8;

impl GroupElement {
    pub fn identity(n: usize) -> Self {
        Self { g: linalg::identity(n), f: linalg::zeros(n, n) }
    }

    pub fn validate(&self, grid: &SpatialGrid, check: &SmoothingCheck) -> Result<GroupReport> {
        let n = grid.n();
        let gm1 = linalg::add_identity(&self.g, -1.0);
        let slope_g = check.slope(grid, &gm1, 1.0)?;
        let slope_f = check.slope(grid, &self.f, 1.0)?;
        let scale = linalg::max_abs(&self.f).max(1.0);
        let anti_hermitian = linalg::max_abs_diff(&self.f, &linalg::scale_real(&linalg::adjoint(&self.f), -1.0)) / scale;
        let sv = linalg::eigvalsh(&(self.g.adjoint() * &self.g))?;
        let condition = (sv[n - 1] / sv[0].max(f64::MIN_POSITIVE)).sqrt();
        let pass = slope_g <= check.threshold && slope_f <= check.threshold && anti_hermitian <= 1e-12 && condition < MAX_CONDITION;
        Ok(GroupReport { slope_g, slope_f, anti_hermitian, condition, pass })
    }

    /// `G₂ G₁ = (g₂g₁, (g₂^†)⁻¹ f₁ g₂⁻¹ + f₂)` for `self = G₂`.
    pub fn compose(&self, first: &Self) -> Self {
        let gi = linalg::inverse(&self.g);
        Self { g: &self.g * &first.g, f: gi.adjoint() * &first.f * &gi + &self.f }
    }
}

/// `α_G(r) = (g^†)⁻¹ r g⁻¹ + f`, with `r' + r'^†` re-verified positive.
pub fn group_act(ge: &GroupElement, r: &GridOperator) -> Result<GridOperator> {
    let gi = linalg::inverse(&ge.g);
    let out = gi.adjoint() * r.mat() * &gi + &ge.f;
    let min = linalg::eigmin(&(&out + out.adjoint()))?;
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    GridOperator::new(r.grid(), out)
}

/// `u_G = [[g^†, 0], [0, g⁻¹]] [[1, f], [0, 1]]`.
pub fn u_of_g(ge: &GroupElement) -> CMat {
    let n = ge.g.nrows();
    let ga = ge.g.adjoint().to_owned();
    let gi = linalg::inverse(&ge.g);
    linalg::block2(&ga, &(&ga * &ge.f), &linalg::zeros(n, n), &gi)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CovarianceReport {
    /// `λ(α_G(r)) - u_G^† λ(r) u_G`, relative to `max|λ(r)|`.
    pub residual: f64,
    /// `u_G^† q u_G - q`, relative to `max(1, max|u_G|²)`.
    pub charge: f64,
    pub pass: bool,
}

pub fn covariance_check(ge: &GroupElement, r: &GridOperator) -> Result<CovarianceReport> {
    let lam = canonical_state(r)?;
    let moved = canonical_state(&group_act(ge, r)?)?;
    let u = u_of_g(ge);
    let pulled = u.adjoint() * lam.lambda() * &u;
    let residual = linalg::max_abs_diff(moved.lambda(), &pulled) / lam.scale();
    let q = linalg::charge(r.grid().n());
    let charge = linalg::max_abs_diff(&(u.adjoint() * &q * &u), &q) / linalg::max_abs(&u).max(1.0).powi(2);
    Ok(CovarianceReport { residual, charge, pass: residual <= 1e-9 && charge <= 1e-9 })
}

/// Random operator with Fourier-basis entries `scale · z · e^{-(k²+k'²)/(2w²)}`.
pub fn random_smoothing(grid: &SpatialGrid, scale: f64, width: f64, rng: &mut impl Rng) -> CMat {
    let n = grid.n();
    let m = CMat::from_fn(n, n, |p, q| {
        let (kp, kq) = (grid.mode(p) as f64, grid.mode(q) as f64);
        let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        z * scale * (-(kp * kp + kq * kq) / (2.0 * width * width)).exp()
    });
    GridOperator::from_fourier(grid, &m).into_mat()
}

/// Seeded group element with `‖g - 1‖`, `‖f‖` of order `scale`.
pub fn random_group_element(grid: &SpatialGrid, scale: f64, rng: &mut impl Rng) -> GroupElement {
    let g = linalg::add_identity(&random_smoothing(grid, scale, 3.0, rng), 1.0);
    let k = random_smoothing(grid, scale, 3.0, rng);
    let f = &k - k.adjoint();
    GroupElement { g, f }
}

/// Seeded spec with `‖a₀‖ = 0.9`.
pub fn random_spec(grid: &SpatialGrid, scale: f64, rng: &mut impl Rng) -> Result<StateSpec> {
    let n = grid.n();
    let a_inf = random_smoothing(grid, scale, 3.0, rng);
    let b_inf = random_smoothing(grid, scale, 3.0, rng);
    let raw = CMat::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let a0 = linalg::scale_real(&raw, 0.9 / operator_norm(&raw)?);
    Ok(StateSpec { a_inf, b_inf, a0 })
}

/// `E = A^{1/2}`, `E⁻¹` and the spectrum of `E`.
fn energy(a: &GridOperator) -> Result<(Vec<f64>, CMat)> {
    let (vals, u) = linalg::eigh(a.mat())?;
    let min = vals.first().copied().unwrap_or(0.0);
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    Ok((vals.iter().map(|v| v.sqrt()).collect(), u))
}

/// `λ_vac = ½[[E, 1], [1, E⁻¹]]` with `E = A^{1/2}`.
pub fn static_vacuum(a: &GridOperator) -> Result<TwoPointFunction> {
    thermal(a, f64::INFINITY)
}

/// `λ_KMS = ½[[E(1+2n), 1], [1, E⁻¹(1+2n)]]`, `n = (e^{βE} - 1)⁻¹`.
pub fn static_kms(a: &GridOperator, beta: f64) -> Result<TwoPointFunction> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("inverse temperature must be positive, got {beta}")));
    }
    thermal(a, beta)
}

fn thermal(a: &GridOperator, beta: f64) -> Result<TwoPointFunction> {
    let n = a.grid().n();
    let (e, u) = energy(a)?;
    // 1 + 2n = coth(βE/2)
    let occ: Vec<f64> = e.iter().map(|&v| if beta.is_infinite() { 1.0 } else { 1.0 / (0.5 * beta * v).tanh() }).collect();
    let top: Vec<f64> = e.iter().zip(&occ).map(|(v, o)| 0.5 * v * o).collect();
    let bottom: Vec<f64> = e.iter().zip(&occ).map(|(v, o)| 0.5 * o / v).collect();
    let half = linalg::scale_real(&linalg::identity(n), 0.5);
    let lam = linalg::block2(&linalg::from_eig(&top, &u), &half, &half, &linalg::from_eig(&bottom, &u));
    TwoPointFunction::new(a.grid(), lam)
}

/// Windows `χ_n ≥ 0` with `Σ χ_n² = 1`: smoothstep bumps over equal arcs,
/// each edge blended over `overlap` (fraction of the arc), then normalized.
pub fn partition_windows(grid: &SpatialGrid, charts: usize, overlap: f64) -> Result<Vec<GridFunction>> {
    if charts == 0 || !(overlap > 0.0 && overlap <= 1.0) {
        return Err(Error::InvalidArgument(format!("need charts ≥ 1 and overlap in (0, 1], got {charts}, {overlap}")));
    }
    let l = grid.length();
    if charts == 1 {
        return Ok(vec![GridFunction::constant(grid, C64::new(1.0, 0.0))]);
    }
    let arc = l / charts as f64;
    let w = overlap * arc;
    let bumps: Vec<Vec<f64>> = (0..charts)
        .map(|c| {
            let mid = (c as f64 + 0.5) * arc;
            grid.nodes()
                .iter()
                .map(|&x| {
                    let d = ((x - mid + 0.5 * l).rem_euclid(l) - 0.5 * l).abs();
                    // 1 within arc/2 - w/2 of the centre, 0 beyond arc/2 + w/2
                    1.0 - cutoff(1.0 + (d - 0.5 * (arc - w)) / w)
                })
                .collect()
        })
        .collect();
    let nodes = grid.n();
    let norm: Vec<f64> = (0..nodes).map(|j| bumps.iter().map(|b| b[j] * b[j]).sum::<f64>().sqrt()).collect();
    if norm.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("windows leave a gap".into()));
    }
    bumps.iter().map(|b| GridFunction::from_real(grid, &b.iter().zip(&norm).map(|(v, s)| v / s).collect::<Vec<_>>())).collect()
}

/// `max |Σ χ_n² - 1|`.
pub fn partition_defect(windows: &[GridFunction]) -> f64 {
    let n = windows.first().map(|w| w.values().len()).unwrap_or(0);
    (0..n).map(|j| (windows.iter().map(|w| w.values()[j].norm_sqr()).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
}

fn window_block(chi: &GridFunction) -> CMat {
    let d = linalg::diag(chi.values());
    linalg::block_diag(&d, &d)
}

/// `max |Σ (χ_n⊗1)^† q (χ_n⊗1) - q|`.
pub fn q_reconstruction(windows: &[GridFunction]) -> f64 {
    let n = windows[0].values().len();
    let q = linalg::charge(n);
    let sum = windows.iter().fold(linalg::zeros(2 * n, 2 * n), |acc, w| {
        let c = window_block(w);
        acc + c.adjoint() * &q * &c
    });
    linalg::max_abs_diff(&sum, &q)
}

/// `λ = Σ (χ_n⊗1)^† λ_n (χ_n⊗1)` for real windows with `Σ χ_n² = 1`.
pub fn glue_states(charts: &[(GridFunction, TwoPointFunction)]) -> Result<TwoPointFunction> {
    let (_, first_l) = charts.first().ok_or_else(|| Error::InvalidArgument("no charts".into()))?;
    let grid = first_l.grid().clone();
    let windows: Vec<GridFunction> = charts.iter().map(|c| c.0.clone()).collect();
    if windows.iter().any(|w| w.max_imag() > 0.0) {
        return Err(Error::InvalidArgument("windows must be real".into()));
    }
    let defect = partition_defect(&windows);
    if !(defect <= 1e-12) {
        return Err(Error::InvalidArgument(format!("partition of unity defect {defect:e}")));
    }
    let n = grid.n();
    let mut acc = linalg::zeros(2 * n, 2 * n);
    for (w, l) in charts {
        if l.grid() != &grid || w.grid() != &grid {
            return Err(Error::GridMismatch);
        }
        let pos = check_positivity(l)?;
        if !pos.pass {
            return Err(Error::InvalidArgument(format!("local state fails positivity: {pos:?}")));
        }
        let c = window_block(w);
        acc += c.adjoint() * l.lambda() * &c;
    }
    TwoPointFunction::new(&grid, acc)
}
