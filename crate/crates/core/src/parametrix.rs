//! Approximate evolution of `∂_t² φ + a(t) φ = 0`: the symbols `ε`, `b`, the
//! operators `r`, `d±`, the propagators `u±` and the splitting transform `T(r)`.
//!
//! Operators act on nodal grid values; propagation runs in the Fourier basis
//! where quantization assembles directly.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModelCoefficients;
use crate::grid::{from_fourier_basis, to_fourier_basis, GridFunction, GridOperator, SpatialGrid};
use crate::linalg::{self, CMat};
use crate::quantize::{diff_op_matrix, quantize_fourier, weyl_symbol_continued, weyl_symbol_of_diff_op};
use crate::symbol::{
    adjoint_symbol, asymptotic_inverse, asymptotic_sqrt_continued, cutoff, fixed_point_solve, moyal_commutator, moyal_to_bottom, ContourSymbol, PolyhomSymbol,
};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParametrixOptions {
    /// Number of subleading symbol terms `N`.
    pub truncation: usize,
    pub t_max: f64,
    pub window_nodes: usize,
    /// Real centres of the time contours, spread uniformly over the window.
    pub time_centers: usize,
    /// Samples per contour circle (even).
    pub contour_points: usize,
    /// Circle radius; must stay inside the coefficients' strip of analyticity.
    pub contour_radius: f64,
    /// Initial low-band radius for the correction of `r`.
    pub r_cutoff: f64,
    /// Largest radius tried; defaults to `n/4`.
    pub r_cutoff_max: Option<f64>,
    /// Required lower bound on the spectrum of `E^{1/2}(r + r^†)E^{1/2}`.
    pub spectral_floor: f64,
    /// Weight of the low-band multiplier `(1-χ(|k|)) w ⟨k⟩` added to `E` and `B`.
    pub low_band_weight: f64,
    pub herm_tol: f64,
    pub propagator_tol: f64,
}

impl Default for ParametrixOptions {
    fn default() -> Self {
        Self {
            truncation: 6,
            t_max: 1.0,
            window_nodes: 65,
            time_centers: 9,
            contour_points: 32,
            contour_radius: 0.25,
            r_cutoff: 2.0,
            r_cutoff_max: None,
            spectral_floor: 0.1,
            low_band_weight: 1.0,
            herm_tol: 1e-10,
            propagator_tol: 1e-10,
        }
    }
}

impl ParametrixOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.truncation < 2 {
            return bad("truncation must be at least 2");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if self.window_nodes < 5 {
            return bad("window_nodes must be at least 5");
        }
        if self.time_centers < 1 || self.contour_points < 8 || !self.contour_points.is_multiple_of(2) {
            return bad("need at least one time centre and an even contour point count of at least 8");
        }
        if !(self.contour_radius > 0.0 && self.contour_radius.is_finite()) {
            return bad("contour_radius must be positive");
        }
        if !(self.r_cutoff > 0.0) || self.r_cutoff_max.is_some_and(|r| !(r >= self.r_cutoff)) {
            return bad("r_cutoff must be positive and not above r_cutoff_max");
        }
        if !(self.spectral_floor > 0.0) || !(self.low_band_weight > 0.0) {
            return bad("spectral_floor and low_band_weight must be positive");
        }
        if !(self.herm_tol > 0.0) || !(self.propagator_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    pub fn window(&self) -> Vec<f64> {
        uniform(self.t_max, self.window_nodes)
    }

    pub fn centers(&self) -> Vec<f64> {
        if self.time_centers == 1 {
            return vec![0.5 * self.t_max];
        }
        uniform(self.t_max, self.time_centers)
    }
}

fn uniform(t_max: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| t_max * i as f64 / (count - 1) as f64).collect()
}

/// Cauchy data `(φ, i⁻¹∂_t φ)` at one instant.
#[derive(Clone, Debug)]
pub struct CauchyData {
    pub f0: GridFunction,
    pub f1: GridFunction,
}

impl CauchyData {
    pub fn new(f0: GridFunction, f1: GridFunction) -> Result<Self> {
        if f0.grid() != f1.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { f0, f1 })
    }

    pub fn zeros(grid: &SpatialGrid) -> Self {
        Self { f0: GridFunction::zeros(grid), f1: GridFunction::zeros(grid) }
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.f0.grid()
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        Self::new(self.f0.add(&o.f0)?, self.f1.add(&o.f1)?)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        Self::new(self.f0.sub(&o.f0)?, self.f1.sub(&o.f1)?)
    }

    pub fn stacked(&self) -> Vec<C64> {
        self.f0.values().iter().chain(self.f1.values()).copied().collect()
    }

    pub fn from_stacked(grid: &SpatialGrid, v: &[C64]) -> Result<Self> {
        let n = grid.n();
        if v.len() != 2 * n {
            return Err(Error::SizeMismatch { expected: 2 * n, found: v.len() });
        }
        Self::new(GridFunction::new(grid, v[..n].to_vec())?, GridFunction::new(grid, v[n..].to_vec())?)
    }

    /// `(‖f0‖² + ‖⟨D⟩⁻¹ f1‖²)^{1/2}`, balancing the two components.
    pub fn energy_norm(&self) -> f64 {
        let g = self.grid();
        let mut hat = self.f1.values().to_vec();
        g.fft(&mut hat);
        let low: f64 = hat.iter().enumerate().map(|(i, v)| v.norm_sqr() / (1.0 + g.wavenumber(i).powi(2))).sum::<f64>() * g.dx();
        (self.f0.norm_l2().powi(2) + low).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.f0.max_abs().max(self.f1.max_abs())
    }
}

/// The charge pairing `(f|qg) = ⟨f0, g1⟩ + ⟨f1, g0⟩`.
pub fn charge_pairing(f: &CauchyData, g: &CauchyData) -> C64 {
    f.f0.inner(&g.f1) + f.f1.inner(&g.f0)
}

/// Weyl symbol of the model operator at real `t`.
pub fn model_symbol(model: &ModelCoefficients, t: f64) -> Result<PolyhomSymbol> {
    let s = model.at(t)?;
    weyl_symbol_of_diff_op(&s.a11, &s.b1, &s.m)
}

/// `ε` sampled on the time contours of `opts`.
pub fn build_epsilon(model: &ModelCoefficients, n: usize, opts: &ParametrixOptions) -> Result<ContourSymbol> {
    let centers = opts.centers();
    let eps = ContourSymbol::sample_times(&centers, opts.contour_radius, opts.contour_points)
        .into_iter()
        .map(|z| {
            let k = model.continued(z)?;
            asymptotic_sqrt_continued(&weyl_symbol_continued(&k.a11, &k.b1, &k.b1_conj, &k.m)?, n)
        })
        .collect::<Result<Vec<_>>>()?;
    ContourSymbol::new(centers, opts.contour_radius, opts.contour_points, eps)
}

/// `ε(t)` at real `t`, with the round-off imaginary part removed.
pub fn epsilon_at(eps: &ContourSymbol, t: f64) -> PolyhomSymbol {
    eps.at(t).real_part()
}

/// `ε # ε - a` for the truncated `ε`, kept `extra` degrees below its bottom.
pub fn epsilon_remainder(eps: &PolyhomSymbol, a: &PolyhomSymbol, extra: usize) -> Result<PolyhomSymbol> {
    let e = eps.as_exact();
    moyal_to_bottom(&e, &e, eps.bottom() - extra as f64)?.sub(a)
}

/// `b = ε + b₀` solving `b # b - ε # ε = i ∂_t b` degree by degree.
///
/// Returns the symbol and the number of fixed-point iterations used.
pub fn build_b(eps: &ContourSymbol, n: usize) -> Result<(ContourSymbol, usize)> {
    let bottom = eps.top_order() - n as f64;
    let inv2e = eps.map(|e| asymptotic_inverse(&e.scale(C64::new(2.0, 0.0)), n))?;
    let eps_t = eps.time_derivative()?;
    let zip =
        |a: &ContourSymbol, b: &ContourSymbol, f: &dyn Fn(&PolyhomSymbol, &PolyhomSymbol) -> Result<PolyhomSymbol>| crate::symbol::SymbolFamily::zip(a, b, f);
    let seed = zip(&inv2e, &eps_t, &|g, et| moyal_to_bottom(g, &et.scale(I), bottom))?;
    let step = |b0: &ContourSymbol| -> Result<ContourSymbol> {
        let b0_t = b0.time_derivative()?;
        let samples = (0..b0.samples().len())
            .map(|j| {
                let b = &b0.samples()[j];
                let comm = moyal_commutator(&eps.samples()[j], b, n)?;
                let sq = moyal_to_bottom(b, b, bottom)?;
                let inner = comm.add(&b0_t.samples()[j].scale(I))?.sub(&sq)?;
                moyal_to_bottom(&inv2e.samples()[j], &inner, bottom)
            })
            .collect::<Result<Vec<_>>>()?;
        ContourSymbol::new(b0.centers().to_vec(), b0.radius(), b0.points(), samples)
    };
    let fp = fixed_point_solve(&seed, &step, n)?;
    let b = zip(eps, &fp.solution, &|e, b0| e.add(b0))?;
    Ok((b, fp.iterations))
}

/// `b # b - ε # ε - i ∂_t b` at real `t` for the truncated symbols.
pub fn b_remainder(b: &ContourSymbol, eps: &ContourSymbol, t: f64, extra: usize) -> Result<PolyhomSymbol> {
    let bt = b.at(t);
    let (bj, ej) = (bt.as_exact(), epsilon_at(eps, t).as_exact());
    let bottom = bt.bottom() - extra as f64;
    let bb = moyal_to_bottom(&bj, &bj, bottom)?;
    let ee = moyal_to_bottom(&ej, &ej, bottom)?;
    bb.sub(&ee)?.sub(&b.dt_at(t).as_exact().scale(I))
}

/// Diagonal of the low-band multiplier `(1 - χ(|k|)) w ⟨k⟩` in FFT ordering.
pub fn low_band(grid: &SpatialGrid, weight: f64) -> Vec<f64> {
    (0..grid.n())
        .map(|i| {
            let k = grid.wavenumber(i);
            (1.0 - cutoff(k.abs())) * weight * (1.0 + k * k).sqrt()
        })
        .collect()
}

fn add_diag(m: &mut CMat, d: &[f64]) {
    for (i, v) in d.iter().enumerate() {
        m[(i, i)] += *v;
    }
}

fn hermitian_checked(m: CMat, tol: f64) -> Result<CMat> {
    let asym = linalg::asymmetry(&m);
    let bound = tol * linalg::max_abs(&m).max(1.0);
    if asym > bound {
        return Err(Error::NotHermitian { asym, tol: bound });
    }
    Ok(linalg::hermitian_part(&m))
}

/// Fourier-basis `Q(Re s) + i Q(Im s)` with both parts made exactly Hermitian.
pub fn quantize_split(s: &PolyhomSymbol, tol: f64) -> Result<CMat> {
    let s = s.denoised();
    let re = s.real_part();
    let im = s.sub(&re)?.scale(-I);
    let qr = hermitian_checked(quantize_fourier(&re), tol)?;
    if im.max_abs() == 0.0 {
        return Ok(qr);
    }
    let qi = hermitian_checked(quantize_fourier(&im), tol)?;
    Ok(qr + linalg::scale(&qi, I))
}

/// Chosen correction radius and the spectral bounds of `E^{1/2}(r + r^†)E^{1/2}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CutoffChoice {
    pub radius: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// `r = Q((b^*)^{(-1)})` with its low band replaced by `E^{-1}`.
///
/// With `P = 1 - χ(|D|/R)` the correction is `r - ½ P (r + r^† - 2E^{-1}) P`;
/// `R` doubles until `E^{1/2}(r + r^†)E^{1/2} ≥ spectral_floor`.
pub fn build_r(b0: &PolyhomSymbol, e: &GridOperator, n: usize, opts: &ParametrixOptions) -> Result<(GridOperator, CutoffChoice)> {
    let grid = e.grid();
    let r0 = GridOperator::from_fourier(grid, &quantize_fourier(&asymptotic_inverse(&adjoint_symbol(b0), n)?.denoised()));
    let (e_half, e_inv_half) = linalg::sqrt_and_inv_sqrt(e.mat())?;
    let two_e_inv = linalg::scale_real(&(&e_inv_half * &e_inv_half), 2.0);
    let excess = GridOperator::new(grid, r0.mat() + r0.mat().adjoint() - &two_e_inv)?.fourier_matrix();
    let max_radius = opts.r_cutoff_max.unwrap_or(grid.n() as f64 / 4.0);
    let mut radius = opts.r_cutoff;
    loop {
        let p: Vec<f64> = (0..grid.n()).map(|i| 1.0 - cutoff(grid.wavenumber(i).abs() / radius)).collect();
        let corr = CMat::from_fn(grid.n(), grid.n(), |i, j| excess[(i, j)] * (0.5 * p[i] * p[j]));
        let r = r0.mat() - from_fourier_basis(grid, &corr);
        let h = &r + r.adjoint();
        let eigs = linalg::eigvalsh(&(&e_half * &h * &e_half))?;
        let (lo, hi) = (eigs[0], *eigs.last().unwrap());
        if lo >= opts.spectral_floor {
            return Ok((GridOperator::new(grid, r)?, CutoffChoice { radius, min_eig: lo, max_eig: hi }));
        }
        if radius * 2.0 > max_radius {
            return Err(Error::CutoffExhausted { radius, min_eig: lo });
        }
        radius *= 2.0;
    }
}

/// `T(r)`, `T(r)^{-1}` and `(r + r^†)^{-1/2}` as `2n × 2n` block matrices.
pub fn build_t(r: &GridOperator) -> Result<(CMat, CMat, CMat)> {
    let r = r.mat();
    let h = r + r.adjoint();
    let (_, hm) = linalg::sqrt_and_inv_sqrt(&h)?;
    let ra = linalg::adjoint(r);
    let t = linalg::block2(&hm, &(&hm * r), &hm, &linalg::scale_real(&(&hm * &ra), -1.0));
    let t_inv = linalg::block2(&(&ra * &hm), &(r * &hm), &hm, &linalg::scale_real(&hm, -1.0));
    Ok((t, t_inv, hm))
}

/// Which propagator: `u₊` generated by `iB`, `u₋` by `-iB^†`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

/// The assembled parametrix on a time window starting at `0`.
#[derive(Clone, Debug)]
pub struct ParametrixBundle {
    opts: ParametrixOptions,
    model: ModelCoefficients,
    window: Vec<f64>,
    eps: ContourSymbol,
    b: ContourSymbol,
    b_iterations: usize,
    low_band: Vec<f64>,
    e0: GridOperator,
    b0: GridOperator,
    r: GridOperator,
    cutoff: CutoffChoice,
    d_plus: GridOperator,
    d_minus: GridOperator,
    t: CMat,
    t_inv: CMat,
}

impl ParametrixBundle {
    pub fn build(model: &ModelCoefficients, opts: &ParametrixOptions) -> Result<Self> {
        opts.validate()?;
        let n = opts.truncation;
        let eps = build_epsilon(model, n, opts)?;
        let (b, b_iterations) = build_b(&eps, n)?;
        Self::assemble(model, opts, eps, b, b_iterations)
    }

    /// Builds with an externally supplied `b` (same contours as `ε`).
    pub fn assemble(model: &ModelCoefficients, opts: &ParametrixOptions, eps: ContourSymbol, b: ContourSymbol, b_iterations: usize) -> Result<Self> {
        opts.validate()?;
        let grid = model.grid().clone();
        let low = low_band(&grid, opts.low_band_weight);
        let mut e0 = hermitian_checked(quantize_fourier(&epsilon_at(&eps, 0.0).denoised()), opts.herm_tol)?;
        add_diag(&mut e0, &low);
        let e0 = GridOperator::from_fourier(&grid, &e0);
        let e0 = GridOperator::new(&grid, linalg::hermitian_part(e0.mat()))?;
        let b_start = b.at(0.0);
        let mut b0 = quantize_split(&b_start, opts.herm_tol)?;
        add_diag(&mut b0, &low);
        let b0 = GridOperator::from_fourier(&grid, &b0);
        let (r, cutoff) = build_r(&b_start, &e0, opts.truncation, opts)?;
        let s = b0.mat() + b0.mat().adjoint();
        let s_inv = linalg::inverse(&s);
        let d_plus = GridOperator::new(&grid, &s_inv * b0.mat().adjoint())?;
        let d_minus = GridOperator::new(&grid, &s_inv * b0.mat())?;
        let (t, t_inv, _) = build_t(&r)?;
        Ok(Self {
            opts: opts.clone(),
            model: model.clone(),
            window: opts.window(),
            eps,
            b,
            b_iterations,
            low_band: low,
            e0,
            b0,
            r,
            cutoff,
            d_plus,
            d_minus,
            t,
            t_inv,
        })
    }

    pub fn options(&self) -> &ParametrixOptions {
        &self.opts
    }
    pub fn model(&self) -> &ModelCoefficients {
        &self.model
    }
    pub fn grid(&self) -> &SpatialGrid {
        self.model.grid()
    }
    pub fn window(&self) -> &[f64] {
        &self.window
    }
    pub fn epsilon(&self) -> &ContourSymbol {
        &self.eps
    }
    pub fn b(&self) -> &ContourSymbol {
        &self.b
    }
    pub fn b_iterations(&self) -> usize {
        self.b_iterations
    }
    pub fn e0(&self) -> &GridOperator {
        &self.e0
    }
    pub fn b0(&self) -> &GridOperator {
        &self.b0
    }
    pub fn r(&self) -> &GridOperator {
        &self.r
    }
    pub fn cutoff(&self) -> CutoffChoice {
        self.cutoff
    }
    pub fn d_plus(&self) -> &GridOperator {
        &self.d_plus
    }
    pub fn d_minus(&self) -> &GridOperator {
        &self.d_minus
    }
    pub fn t(&self) -> &CMat {
        &self.t
    }
    pub fn t_inv(&self) -> &CMat {
        &self.t_inv
    }

    /// Fourier-basis `E(t) = Q(ε(t)) + W`.
    pub fn e_fourier(&self, t: f64) -> Result<CMat> {
        let mut e = hermitian_checked(quantize_fourier(&epsilon_at(&self.eps, t).denoised()), self.opts.herm_tol)?;
        add_diag(&mut e, &self.low_band);
        Ok(e)
    }

    /// Fourier-basis `B(t) = Q(b(t)) + W`.
    pub fn b_fourier(&self, t: f64) -> Result<CMat> {
        let mut b = quantize_split(&self.b.at(t), self.opts.herm_tol)?;
        add_diag(&mut b, &self.low_band);
        Ok(b)
    }

    fn generator(&self, branch: Branch, t: f64) -> Result<CMat> {
        let b = self.b_fourier(t)?;
        Ok(match branch {
            Branch::Plus => linalg::scale(&b, I),
            Branch::Minus => linalg::scale(&linalg::adjoint(&b), -I),
        })
    }

    /// One sweep of commutator-free 4th-order Magnus steps through `outputs`.
    fn magnus_sweep(&self, branch: Branch, t0: f64, outputs: &[f64], v: &CMat, per_base: usize) -> Result<Vec<CMat>> {
        let base = 0.5 * self.opts.t_max / (self.opts.window_nodes - 1) as f64;
        let mut out = Vec::with_capacity(outputs.len());
        let mut cur = v.clone();
        let mut t = t0;
        let mut a0 = self.generator(branch, t)?;
        for &target in outputs {
            let span = target - t;
            let steps = if span == 0.0 { 0 } else { ((span.abs() / base - 1e-9).ceil().max(1.0) as usize) * per_base };
            for s in 0..steps {
                let h = span / steps as f64;
                let ta = t + s as f64 * h;
                let am = self.generator(branch, ta + 0.5 * h)?;
                let a1 = self.generator(branch, ta + h)?;
                let x2 = CMat::from_fn(cur.nrows(), cur.nrows(), |i, j| (a0[(i, j)] * 0.25 + am[(i, j)] / 3.0 - a1[(i, j)] / 12.0) * h);
                let x1 = CMat::from_fn(cur.nrows(), cur.nrows(), |i, j| (-a0[(i, j)] / 12.0 + am[(i, j)] / 3.0 + a1[(i, j)] * 0.25) * h);
                cur = linalg::expm_action(&x1, &linalg::expm_action(&x2, &cur));
                a0 = a1;
            }
            t = target;
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// Applies `u±(t, t0)` to nodal columns `v` at each output time, halving
    /// the step until successive refinements agree.
    pub fn propagate(&self, branch: Branch, t0: f64, outputs: &[f64], v: &CMat) -> Result<Vec<CMat>> {
        let grid = self.grid();
        let lo = -1e-12;
        let hi = self.opts.t_max + 1e-12;
        if outputs.iter().chain([&t0]).any(|&t| !(t >= lo && t <= hi)) {
            return Err(Error::InvalidArgument("propagation times outside the window".into()));
        }
        let mut vh = v.clone();
        for j in 0..vh.ncols() {
            grid.fft(vh.col_as_slice_mut(j));
        }
        let scale = linalg::max_abs(&vh).max(f64::MIN_POSITIVE);
        let tol = self.opts.propagator_tol;
        let mut prev = self.magnus_sweep(branch, t0, outputs, &vh, 1)?;
        let mut change = f64::INFINITY;
        for level in 1..=4 {
            let next = self.magnus_sweep(branch, t0, outputs, &vh, 1 << level)?;
            change = prev.iter().zip(&next).map(|(a, b)| linalg::max_abs_diff(a, b)).fold(0.0, f64::max) / scale;
            prev = next;
            if change < tol {
                let mut res = prev;
                for m in &mut res {
                    for j in 0..m.ncols() {
                        grid.ifft(m.col_as_slice_mut(j));
                    }
                }
                return Ok(res);
            }
        }
        Err(Error::NoConvergence { change, tol })
    }

    /// Initial data for the two branches: `d₊(f0 + r f1)` and `d₋(f0 - r^† f1)`.
    pub fn branch_data(&self, data: &[CauchyData]) -> Result<(CMat, CMat)> {
        let n = self.grid().n();
        let f0 = CMat::from_fn(n, data.len(), |i, j| data[j].f0.values()[i]);
        let f1 = CMat::from_fn(n, data.len(), |i, j| data[j].f1.values()[i]);
        let r = self.r.mat();
        let plus = self.d_plus.mat() * (&f0 + r * &f1);
        let minus = self.d_minus.mat() * (&f0 - r.adjoint() * &f1);
        Ok((plus, minus))
    }

    /// `U(t, 0) f` and `i⁻¹ ∂_t U(t, 0) f` at the given times, per datum.
    pub fn evolve(&self, data: &[CauchyData], times: &[f64]) -> Result<Vec<Vec<CauchyData>>> {
        let grid = self.grid().clone();
        let (gp, gm) = self.branch_data(data)?;
        let up = self.propagate(Branch::Plus, 0.0, times, &gp)?;
        let um = self.propagate(Branch::Minus, 0.0, times, &gm)?;
        let mut out = Vec::with_capacity(times.len());
        for (k, &t) in times.iter().enumerate() {
            let b = GridOperator::from_fourier(&grid, &self.b_fourier(t)?);
            let phi = &up[k] + &um[k];
            let dphi = b.mat() * &up[k] - b.mat().adjoint() * &um[k];
            let col = |m: &CMat, j: usize| GridFunction::new(&grid, m.col_as_slice(j).to_vec());
            out.push((0..data.len()).map(|j| CauchyData::new(col(&phi, j)?, col(&dphi, j)?)).collect::<Result<Vec<_>>>()?);
        }
        Ok(out)
    }

    /// `(f⁺, f⁻)` with `f⁺ ∈ C⁺(r)`, `f⁻ ∈ C⁻(r)` and `f⁺ + f⁻ = f`.
    pub fn split_data(&self, f: &CauchyData) -> Result<(CauchyData, CauchyData)> {
        let n = self.grid().n();
        let tf = &self.t * linalg::col_vec(&f.stacked());
        let mut plus = linalg::zeros(2 * n, 1);
        for i in 0..n {
            plus[(i, 0)] = tf[(i, 0)];
        }
        let fp = CauchyData::from_stacked(self.grid(), &linalg::col_to_vec(&(&self.t_inv * &plus), 0))?;
        let fm = f.sub(&fp)?;
        Ok((fp, fm))
    }

    /// Defect operators of `U(0,0)`: blocks mapping `(f0, f1)` to
    /// `(U f - f0, i⁻¹∂_t U f - f1)`.
    pub fn initial_defects(&self) -> Result<[GridOperator; 4]> {
        let g = self.grid();
        let (dp, dm, r, b) = (self.d_plus.mat(), self.d_minus.mat(), self.r.mat(), self.b0.mat());
        let ra = r.adjoint();
        let ba = b.adjoint();
        let id = linalg::identity(g.n());
        Ok([
            GridOperator::new(g, dp + dm - &id)?,
            GridOperator::new(g, dp * r - dm * ra)?,
            GridOperator::new(g, b * dp - ba * dm)?,
            GridOperator::new(g, b * dp * r + ba * dm * ra - &id)?,
        ])
    }

    /// Operators `iḂ - B² + A` and `-iḂ^† - (B^†)² + A` at time `t`; applied to
    /// the branch solutions they give `(∂_t² + A) U(t,0) f`.
    pub fn pde_residuals(&self, t: f64) -> Result<(GridOperator, GridOperator)> {
        let g = self.grid();
        let b = GridOperator::from_fourier(g, &self.b_fourier(t)?).into_mat();
        // W is constant in time, so Ḃ is the quantized ∂_t b
        let db = GridOperator::from_fourier(g, &quantize_split(&self.b.dt_at(t), self.opts.herm_tol)?).into_mat();
        let s = self.model.at(t)?;
        let a = diff_op_matrix(&s.a11, &s.b1, &s.m)?.into_mat();
        let plus = linalg::scale(&db, I) - &b * &b + &a;
        let ba = b.adjoint().to_owned();
        let minus = linalg::scale(&db.adjoint().to_owned(), -I) - &ba * &ba + &a;
        Ok((GridOperator::new(g, plus)?, GridOperator::new(g, minus)?))
    }

    /// Smallest `c` with `E(t) ≥ c ⟨D⟩`, from the Hermitian pencil.
    pub fn ellipticity_constant(&self, t: f64) -> Result<f64> {
        let e = self.e_fourier(t)?;
        let g = self.grid();
        let w: Vec<f64> = (0..g.n()).map(|i| (1.0 + g.wavenumber(i).powi(2)).powf(-0.25)).collect();
        let m = CMat::from_fn(g.n(), g.n(), |i, j| e[(i, j)] * (w[i] * w[j]));
        linalg::eigmin(&m)
    }
}

/// Nodal `E(0)^{-1}`, the static choice of `r`.
pub fn static_r(bundle: &ParametrixBundle) -> Result<GridOperator> {
    GridOperator::new(bundle.grid(), linalg::herm_fn(bundle.e0().mat(), |v| 1.0 / v)?)
}

/// Fourier-basis matrix helper shared with callers that need it.
pub fn fourier_of(op: &GridOperator) -> CMat {
    to_fourier_basis(op.grid(), op.mat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldSpec, SpaceProfile, TimeProfile};
    use crate::geometry::{reduce_to_model, ExplicitCoefficients, MetricData, ModelSource};
    use crate::grid::{smoothing_decay_diagnostic_with, DecayOptions};

    fn static_model(n: usize) -> ModelCoefficients {
        let g = SpatialGrid::periodic_2pi(n).unwrap();
        let e = ExplicitCoefficients {
            a11: FieldSpec::spatial(SpaceProfile { mean: 1.0, cos: vec![0.15], sin: vec![] }),
            b1_re: FieldSpec::zero(),
            b1_im: FieldSpec::zero(),
            m: FieldSpec::constant(1.0),
        };
        ModelCoefficients::new(&g, ModelSource::Explicit(e), 1.0).unwrap()
    }

    fn scaled_model(n: usize) -> ModelCoefficients {
        // a11 = s(t)², x-independent
        let g = SpatialGrid::periodic_2pi(n).unwrap();
        let md = MetricData {
            c: FieldSpec::constant(1.0),
            h: FieldSpec {
                time: TimeProfile { poly: vec![1.0], sin_amp: 0.2, sin_freq: 1.5, sin_phase: 0.0 },
                time_power: -2.0,
                space: SpaceProfile::constant(1.0),
                space_power: 1.0,
            },
            v: FieldSpec::zero(),
            a1: FieldSpec::zero(),
            rho: FieldSpec::constant(1.0),
        };
        reduce_to_model(&g, &md, 1.0).unwrap()
    }

    fn small_opts() -> ParametrixOptions {
        ParametrixOptions { window_nodes: 17, truncation: 4, time_centers: 5, contour_points: 24, ..Default::default() }
    }

    #[test]
    fn static_b_is_epsilon() {
        let model = static_model(32);
        let opts = small_opts();
        let eps = build_epsilon(&model, 4, &opts).unwrap();
        let (b, _) = build_b(&eps, 4).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert!(b.at(t).sub(&eps.at(t)).unwrap().max_abs() < 1e-13);
        }
    }

    #[test]
    fn subprincipal_of_b_for_scaled_wavenumber() {
        // ε = s(t)|k| up to lower order; degree-0 part of b is i s'/(2s)
        let model = scaled_model(32);
        let opts = small_opts();
        let eps = build_epsilon(&model, 4, &opts).unwrap();
        let (b, _) = build_b(&eps, 4).unwrap();
        let s = |t: f64| 1.0 + 0.2 * (1.5 * t).sin();
        let ds = |t: f64| 0.3 * (1.5 * t).cos();
        for t in [0.0, 0.1, 0.55, 1.0] {
            let c = b.at(t).component_at_degree(0.0).unwrap();
            let want = 0.5 * ds(t) / s(t);
            for v in c.cplus.values().iter().chain(c.cminus.values()) {
                assert!(v.re.abs() < 1e-12 && (v.im - want).abs() < 1e-12, "{v} vs {want}");
            }
        }
    }

    #[test]
    fn t_identities_and_static_r() {
        let model = static_model(32);
        let bundle = ParametrixBundle::build(&model, &small_opts()).unwrap();
        let (t, ti) = (bundle.t(), bundle.t_inv());
        let n = 32;
        assert!(linalg::max_abs_diff(&(t * ti), &linalg::identity(2 * n)) < 1e-10);
        let q = linalg::charge(n);
        let lhs = ti.adjoint() * &q * ti;
        assert!(linalg::max_abs_diff(&lhs, &linalg::charge_diag(n)) < 1e-10);
        let dsum = bundle.d_plus().add(bundle.d_minus()).unwrap();
        assert!(dsum.max_abs_diff(&GridOperator::identity(model.grid())) < 1e-10);
        // static: B = E exactly, so d± = 1/2
        assert!(bundle.b0().max_abs_diff(bundle.e0()) < 1e-12);
        assert!(bundle.d_plus().max_abs_diff(&GridOperator::identity(model.grid()).scale(C64::new(0.5, 0.0))) < 1e-10);
    }

    #[test]
    fn static_propagator_is_exponential() {
        let model = static_model(32);
        let bundle = ParametrixBundle::build(&model, &small_opts()).unwrap();
        let e = bundle.e0().mat();
        let (vals, u) = linalg::eigh(e).unwrap();
        let g = model.grid();
        let v = GridFunction::from_fn(g, |x| C64::new((3.0 * x).cos(), (2.0 * x).sin()));
        let t = 0.5;
        let exact = {
            let c = linalg::from_eig(&vals.iter().map(|l| (l * t).cos()).collect::<Vec<_>>(), &u);
            let s = linalg::from_eig(&vals.iter().map(|l| (l * t).sin()).collect::<Vec<_>>(), &u);
            (&c + linalg::scale(&s, I)) * linalg::col_vec(v.values())
        };
        let got = bundle.propagate(Branch::Plus, 0.0, &[t], &linalg::col_vec(v.values())).unwrap();
        assert!(linalg::max_abs_diff(&got[0], &exact) < 1e-9);
        let back = bundle.propagate(Branch::Plus, t, &[0.0], &got[0]).unwrap();
        assert!(linalg::max_abs_diff(&back[0], &linalg::col_vec(v.values())) < 1e-9);
    }

    #[test]
    fn splitting_is_symplectically_orthogonal() {
        let model = static_model(32);
        let bundle = ParametrixBundle::build(&model, &small_opts()).unwrap();
        let g = model.grid();
        let f = CauchyData::new(
            GridFunction::from_fn(g, |x| C64::new(x.sin(), 0.3 * (2.0 * x).cos())),
            GridFunction::from_fn(g, |x| C64::new((3.0 * x).cos(), 0.0)),
        )
        .unwrap();
        let (fp, fm) = bundle.split_data(&f).unwrap();
        assert!(charge_pairing(&fp, &fm).norm() < 1e-10);
        assert!(charge_pairing(&fp, &fp).re > 0.0);
        assert!(charge_pairing(&fm, &fm).re < 0.0);
        assert!(fp.add(&fm).unwrap().sub(&f).unwrap().max_abs() < 1e-14);
        // f⁺ lies in C⁺: f0 - r^† f1 = 0
        let lhs = fp.f0.sub(&bundle.r().adjoint().apply(&fp.f1).unwrap()).unwrap();
        assert!(lhs.max_abs() < 1e-10);
    }

    #[test]
    fn initial_defects_are_smoothing() {
        let model = scaled_model(128);
        let bundle = ParametrixBundle::build(&model, &small_opts()).unwrap();
        let d = bundle.initial_defects().unwrap();
        assert!(d[0].max_abs() < 1e-10);
        let o = DecayOptions { guard: None, floor: 1e-10 };
        for k in 1..4 {
            let rep = smoothing_decay_diagnostic_with(&d[k], &[4, 8, 16], o).unwrap();
            assert!(rep.slope < -2.5, "block {k}: {rep:?}");
        }
    }
}
