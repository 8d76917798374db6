//! Direct solution of the Cauchy problem with spectrally applied coefficients,
//! independent of the symbol calculus.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ModelCoefficients, ModelSnapshot};
use crate::grid::GridFunction;
use crate::parametrix::CauchyData;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OracleOptions {
    /// Target for the estimated error of the finest RK4 run, relative to the
    /// largest value of `φ` and `∂_t φ`.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_halvings: 12 }
    }
}

/// `φ` and `∂_t φ` at the requested times.
#[derive(Clone, Debug)]
pub struct DirectSolution {
    pub times: Vec<f64>,
    pub phi: Vec<GridFunction>,
    pub dphi: Vec<GridFunction>,
    /// Estimated relative error before extrapolation.
    pub error_estimate: f64,
    pub steps_per_interval: usize,
}

impl DirectSolution {
    /// Cauchy data `(φ, i⁻¹∂_t φ)` at node `k`.
    pub fn cauchy(&self, k: usize) -> CauchyData {
        CauchyData { f0: self.phi[k].clone(), f1: self.dphi[k].scale(C64::new(0.0, -1.0)) }
    }
}

type State = (Vec<GridFunction>, Vec<GridFunction>);

fn rhs(snap: &ModelSnapshot, s: &State) -> Result<State> {
    let dphi = s.1.clone();
    let dpsi = s.0.iter().map(|p| Ok(snap.apply(p)?.scale(C64::new(-1.0, 0.0)))).collect::<Result<Vec<_>>>()?;
    Ok((dphi, dpsi))
}

fn axpy(s: &State, k: &State, h: f64) -> Result<State> {
    let f = |a: &[GridFunction], b: &[GridFunction]| a.iter().zip(b).map(|(x, y)| x.add(&y.scale(C64::new(h, 0.0)))).collect::<Result<Vec<_>>>();
    Ok((f(&s.0, &k.0)?, f(&s.1, &k.1)?))
}

fn run(model: &ModelCoefficients, init: &State, times: &[f64], per: usize) -> Result<Vec<State>> {
    let mut out = vec![init.clone()];
    let mut s = init.clone();
    let mut snap0 = model.at(times[0])?;
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / per as f64;
        for i in 0..per {
            let t = w[0] + i as f64 * h;
            let mid = model.at(t + 0.5 * h)?;
            let end = model.at(t + h)?;
            let k1 = rhs(&snap0, &s)?;
            let k2 = rhs(&mid, &axpy(&s, &k1, 0.5 * h)?)?;
            let k3 = rhs(&mid, &axpy(&s, &k2, 0.5 * h)?)?;
            let k4 = rhs(&end, &axpy(&s, &k3, h)?)?;
            let mut next = axpy(&s, &k1, h / 6.0)?;
            next = axpy(&next, &k2, h / 3.0)?;
            next = axpy(&next, &k3, h / 3.0)?;
            s = axpy(&next, &k4, h / 6.0)?;
            snap0 = end;
        }
        out.push(s.clone());
    }
    Ok(out)
}

fn max_over(states: &[State], pick: impl Fn(&State) -> &Vec<GridFunction>) -> f64 {
    states.iter().flat_map(|s| pick(s).iter().map(|f| f.max_abs())).fold(0.0, f64::max)
}

fn max_diff(a: &[State], b: &[State], pick: impl Fn(&State) -> &Vec<GridFunction>) -> Result<f64> {
    let mut m = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        for (f, g) in pick(x).iter().zip(pick(y)) {
            m = m.max(f.sub(g)?.max_abs());
        }
    }
    Ok(m)
}

/// Largest frequency of `A(0)`: `√(max a11) κ n/2 + √max|m| + max|b1|`.
fn frequency_bound(model: &ModelCoefficients, times: &[f64]) -> Result<f64> {
    let g = model.grid();
    let mut w = 0.0f64;
    for &t in [times[0], *times.last().unwrap()].iter() {
        let s = model.at(t)?;
        let a = s.a11.values().iter().map(|v| v.re).fold(0.0, f64::max);
        let kmax = g.kappa() * (g.n() / 2) as f64;
        w = w.max(a.sqrt() * kmax + s.m.max_abs().sqrt() + s.b1.max_abs());
    }
    Ok(w)
}

/// RK4 solution of `φ'' + A(t) φ = 0`, `φ(t0) = f0`, `i⁻¹φ'(t0) = f1`, with
/// step halving until the Richardson error estimate meets the tolerance.
/// The returned values are the extrapolated `(16 fine - coarse)/15`.
pub fn solve_cauchy_direct(model: &ModelCoefficients, data: &[CauchyData], times: &[f64], opts: OracleOptions) -> Result<Vec<DirectSolution>> {
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("oracle needs at least two increasing times".into()));
    }
    if data.iter().any(|d| d.grid() != model.grid()) {
        return Err(Error::GridMismatch);
    }
    let init: State = (data.iter().map(|d| d.f0.clone()).collect(), data.iter().map(|d| d.f1.scale(C64::new(0.0, 1.0))).collect());
    let span = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut per = ((span * frequency_bound(model, times)? / 0.5).ceil() as usize).max(1);
    let mut coarse = run(model, &init, times, per)?;
    let mut estimate = f64::INFINITY;
    for _ in 0..opts.max_halvings {
        per *= 2;
        let fine = run(model, &init, times, per)?;
        let s0 = max_over(&fine, |s| &s.0).max(f64::MIN_POSITIVE);
        let s1 = max_over(&fine, |s| &s.1).max(f64::MIN_POSITIVE);
        estimate = (max_diff(&coarse, &fine, |s| &s.0)? / s0).max(max_diff(&coarse, &fine, |s| &s.1)? / s1) / 15.0;
        if estimate < opts.tol {
            let extrap =
                |a: &GridFunction, b: &GridFunction| -> Result<GridFunction> { b.scale(C64::new(16.0 / 15.0, 0.0)).sub(&a.scale(C64::new(1.0 / 15.0, 0.0))) };
            return (0..data.len())
                .map(|d| {
                    let phi = coarse.iter().zip(&fine).map(|(c, f)| extrap(&c.0[d], &f.0[d])).collect::<Result<Vec<_>>>()?;
                    let dphi = coarse.iter().zip(&fine).map(|(c, f)| extrap(&c.1[d], &f.1[d])).collect::<Result<Vec<_>>>()?;
                    Ok(DirectSolution { times: times.to_vec(), phi, dphi, error_estimate: estimate, steps_per_interval: per })
                })
                .collect();
        }
        coarse = fine;
    }
    Err(Error::NoConvergence { change: estimate, tol: opts.tol })
}

/// `σ(φ₁, φ₂) = ∫ conj(∂_t φ₁) φ₂ - conj(φ₁) ∂_t φ₂ dx` at node `k`.
pub fn symplectic_form(a: &DirectSolution, b: &DirectSolution, k: usize) -> C64 {
    a.dphi[k].inner(&b.phi[k]) - a.phi[k].inner(&b.dphi[k])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencySign {
    Positive,
    Negative,
}

/// Share of the Hann-windowed temporal spectrum of `φ` (summed over `x`) on
/// one frequency half-axis, with the `e^{-iωt}` transform convention. Zero
/// and Nyquist bins count half to each side.
pub fn frequency_sign_fraction(sol: &DirectSolution, sign: FrequencySign) -> Result<f64> {
    let m = sol.times.len();
    if m < 32 {
        return Err(Error::InvalidArgument(format!("frequency measurement needs at least 32 nodes, found {m}")));
    }
    let h = sol.times[1] - sol.times[0];
    if sol.times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::InvalidArgument("frequency measurement needs uniform nodes".into()));
    }
    let window: Vec<f64> = (0..m).map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / (m - 1) as f64).cos())).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let n = sol.phi[0].values().len();
    let (mut pos, mut neg) = (0.0, 0.0);
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for x in 0..n {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = sol.phi[j].values()[x] * window[j];
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().enumerate() {
            let p = v.norm_sqr();
            if k == 0 || (m.is_multiple_of(2) && k == m / 2) {
                pos += 0.5 * p;
                neg += 0.5 * p;
            } else if k < m.div_ceil(2) {
                pos += p;
            } else {
                neg += p;
            }
        }
    }
    let total = pos + neg;
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(match sign {
        FrequencySign::Positive => pos / total,
        FrequencySign::Negative => neg / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldSpec, SpaceProfile};
    use crate::geometry::{ExplicitCoefficients, ModelSource};
    use crate::grid::{GridOperator, SpatialGrid};
    use crate::linalg;
    use crate::quantize::diff_op_matrix;

    fn model(n: usize) -> ModelCoefficients {
        let g = SpatialGrid::periodic_2pi(n).unwrap();
        let e = ExplicitCoefficients {
            a11: FieldSpec::spatial(SpaceProfile { mean: 1.0, cos: vec![0.15], sin: vec![] }),
            b1_re: FieldSpec::zero(),
            b1_im: FieldSpec::zero(),
            m: FieldSpec::constant(1.0),
        };
        ModelCoefficients::new(&g, ModelSource::Explicit(e), 1.0).unwrap()
    }

    fn uniform(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    /// `E = A^{1/2}` for the static model and `exp(itE)` applied to `v`.
    fn exact(model: &ModelCoefficients, v: &GridFunction, t: f64) -> (GridOperator, GridFunction) {
        let s = model.at(0.0).unwrap();
        let a = diff_op_matrix(&s.a11, &s.b1, &s.m).unwrap();
        let (vals, u) = linalg::eigh(a.mat()).unwrap();
        let e = linalg::from_eig(&vals.iter().map(|l| l.sqrt()).collect::<Vec<_>>(), &u);
        let c = linalg::from_eig(&vals.iter().map(|l| (l.sqrt() * t).cos()).collect::<Vec<_>>(), &u);
        let sn = linalg::from_eig(&vals.iter().map(|l| (l.sqrt() * t).sin()).collect::<Vec<_>>(), &u);
        let ev = (&c + linalg::scale(&sn, C64::new(0.0, 1.0))) * linalg::col_vec(v.values());
        (GridOperator::new(model.grid(), e).unwrap(), GridFunction::new(model.grid(), linalg::col_to_vec(&ev, 0)).unwrap())
    }

    #[test]
    fn static_positive_frequency_solution() {
        // frequencies below two cycles per window leak through the Hann window
        let m = model(64);
        let g = m.grid();
        let v = GridFunction::from_fn(g, |x| C64::new((12.0 * x).cos(), 0.5 * (14.0 * x).sin()));
        let (e, _) = exact(&m, &v, 0.0);
        let f = CauchyData::new(v.clone(), e.apply(&v).unwrap()).unwrap();
        let times = uniform(65);
        let sol = solve_cauchy_direct(&m, &[f], &times, OracleOptions::default()).unwrap();
        for k in [16, 64] {
            let (_, want) = exact(&m, &v, times[k]);
            assert!(sol[0].phi[k].sub(&want).unwrap().max_abs() < 1e-8);
        }
        assert!(frequency_sign_fraction(&sol[0], FrequencySign::Negative).unwrap() < 0.01);
    }

    #[test]
    fn energy_and_symplectic_form_conserved() {
        let m = model(32);
        let g = m.grid();
        let f = CauchyData::new(GridFunction::from_real_fn(g, |x| (2.0 * x).sin()), GridFunction::from_fn(g, |x| C64::new(0.0, x.cos()))).unwrap();
        let h = CauchyData::new(GridFunction::from_real_fn(g, |x| (3.0 * x).cos()), GridFunction::zeros(g)).unwrap();
        let times = uniform(17);
        let sol = solve_cauchy_direct(&m, &[f.clone(), h.clone()], &times, OracleOptions::default()).unwrap();
        let s = m.at(0.0).unwrap();
        let energy = |k: usize| sol[0].dphi[k].norm_l2().powi(2) + sol[0].phi[k].inner(&s.apply(&sol[0].phi[k]).unwrap()).re;
        assert!((energy(16) - energy(0)).abs() < 1e-8 * energy(0));
        let s0 = symplectic_form(&sol[0], &sol[1], 0);
        assert!((symplectic_form(&sol[0], &sol[1], 16) - s0).norm() < 1e-8);
        let pairing = crate::parametrix::charge_pairing(&f, &h);
        assert!((s0 - pairing * C64::new(0.0, -1.0)).norm() < 1e-12);
        let self_form = symplectic_form(&sol[1], &sol[1], 9);
        assert!((self_form + self_form.conj()).norm() < 1e-12);
    }

    #[test]
    fn cosine_solution_has_symmetric_spectrum() {
        let m = model(32);
        let g = m.grid();
        let v = GridFunction::from_real_fn(g, |x| (6.0 * x).cos());
        let f = CauchyData::new(v, GridFunction::zeros(g)).unwrap();
        let sol = solve_cauchy_direct(&m, &[f], &uniform(65), OracleOptions::default()).unwrap();
        let neg = frequency_sign_fraction(&sol[0], FrequencySign::Negative).unwrap();
        assert!((neg - 0.5).abs() < 0.05, "{neg}");
        let pos = frequency_sign_fraction(&sol[0], FrequencySign::Positive).unwrap();
        assert!((pos + neg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_series() {
        let m = model(16);
        let f = CauchyData::zeros(m.grid());
        let sol = solve_cauchy_direct(&m, &[f], &uniform(9), OracleOptions::default()).unwrap();
        assert!(frequency_sign_fraction(&sol[0], FrequencySign::Positive).is_err());
    }
}
