//! Reduction of a (1+1) metric with potentials to model coefficients, and the
//! bicharacteristic flow of `±√a11 |k|`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::grid::{GridFunction, SpatialGrid};
use crate::linalg::{self, CMat};
use crate::parametrix::{Branch, ParametrixBundle};
use crate::quantize::quantize;
use crate::symbol::PolyhomSymbol;

/// Metric `-c dt² + h dx²`, electric potential `V`, magnetic potential `A₁`
/// and scalar `ρ`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetricData {
    pub c: FieldSpec,
    pub h: FieldSpec,
    #[serde(default = "FieldSpec::zero")]
    pub v: FieldSpec,
    #[serde(default = "FieldSpec::zero")]
    pub a1: FieldSpec,
    pub rho: FieldSpec,
}

/// Coefficients of `-∂ a11 ∂ + b1 ∂ - ∂ b̄1 + m` given directly.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExplicitCoefficients {
    pub a11: FieldSpec,
    #[serde(default = "FieldSpec::zero")]
    pub b1_re: FieldSpec,
    #[serde(default = "FieldSpec::zero")]
    pub b1_im: FieldSpec,
    pub m: FieldSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSource {
    Explicit(ExplicitCoefficients),
    Metric(MetricData),
}

/// Coefficients of the model operator at one instant.
#[derive(Clone, Debug)]
pub struct ModelSnapshot {
    pub t: f64,
    pub a11: GridFunction,
    pub b1: GridFunction,
    pub m: GridFunction,
    /// `c^{-1/4} h^{1/4}`.
    pub conformal: GridFunction,
    /// `F = ∫_0^t V`.
    pub gauge: GridFunction,
}

impl ModelSnapshot {
    /// `D a11 D v + b1 (i D v) - i D (b̄1 v) + m v` by spectral differentiation.
    pub fn apply(&self, v: &GridFunction) -> Result<GridFunction> {
        let i = C64::new(0.0, 1.0);
        let dv = v.d_x(1)?;
        let t1 = self.a11.mul(&dv)?.d_x(1)?;
        let t2 = self.b1.mul(&dv)?.scale(i);
        let t3 = self.b1.conj().mul(v)?.d_x(1)?.scale(i);
        t1.add(&t2)?.sub(&t3)?.add(&self.m.mul(v)?)
    }
}

/// Coefficients continued to complex time. `b1_conj` continues `conj(b1)`
/// from the real axis, so it is not the conjugate of `b1` off the axis.
#[derive(Clone, Debug)]
pub struct ContinuedCoefficients {
    pub a11: GridFunction,
    pub b1: GridFunction,
    pub b1_conj: GridFunction,
    pub m: GridFunction,
}

/// Model coefficients as analytic functions of `t`.
#[derive(Clone, Debug)]
pub struct ModelCoefficients {
    grid: SpatialGrid,
    source: ModelSource,
}

impl ModelCoefficients {
    /// Validates ellipticity (explicit data) or the metric hypotheses on
    /// `[0, t_max]` before accepting the source.
    pub fn new(grid: &SpatialGrid, source: ModelSource, t_max: f64) -> Result<Self> {
        let samples = 33;
        let times: Vec<f64> = (0..samples).map(|i| t_max * i as f64 / (samples - 1) as f64).collect();
        match &source {
            ModelSource::Explicit(e) => {
                for (name, f) in [("a11", &e.a11), ("b1_re", &e.b1_re), ("b1_im", &e.b1_im), ("m", &e.m)] {
                    f.validate(name, t_max)?;
                }
                for &t in &times {
                    let min = min_re(&e.a11.sample(grid, t));
                    if !(min > 0.0) {
                        return Err(Error::Hypothesis(format!("a11 not positive at t={t}: min {min:e}")));
                    }
                }
            }
            ModelSource::Metric(md) => {
                for (name, f) in [("c", &md.c), ("h", &md.h), ("v", &md.v), ("a1", &md.a1), ("rho", &md.rho)] {
                    f.validate(name, t_max)?;
                }
                for &t in &times {
                    for (name, f) in [("c", &md.c), ("h", &md.h)] {
                        let min = min_re(&f.sample(grid, t));
                        if !(min > 0.0) {
                            return Err(Error::Hypothesis(format!("{name} not positive at t={t}: min {min:e}")));
                        }
                    }
                }
            }
        }
        Ok(Self { grid: grid.clone(), source })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn source(&self) -> &ModelSource {
        &self.source
    }

    /// True when no coefficient depends on time.
    pub fn is_static(&self) -> bool {
        match &self.source {
            ModelSource::Explicit(e) => [&e.a11, &e.b1_re, &e.b1_im, &e.m].iter().all(|f| f.is_static()),
            ModelSource::Metric(md) => [&md.c, &md.h, &md.a1, &md.rho].iter().all(|f| f.is_static()) && md.v.is_zero(),
        }
    }

    pub fn at(&self, t: f64) -> Result<ModelSnapshot> {
        let g = &self.grid;
        match &self.source {
            ModelSource::Explicit(e) => {
                let re = e.b1_re.sample(g, t);
                let im = e.b1_im.sample(g, t);
                Ok(ModelSnapshot {
                    t,
                    a11: e.a11.sample(g, t),
                    b1: re.zip_with(&im, |a, b| C64::new(a.re, b.re))?,
                    m: e.m.sample(g, t),
                    conformal: GridFunction::constant(g, C64::new(1.0, 0.0)),
                    gauge: GridFunction::zeros(g),
                })
            }
            ModelSource::Metric(md) => reduce_at(g, md, t),
        }
    }

    /// Coefficients at complex time `z`; no hypothesis checks off the axis.
    pub fn continued(&self, z: C64) -> Result<ContinuedCoefficients> {
        let g = &self.grid;
        let l = g.length();
        match &self.source {
            ModelSource::Explicit(e) => {
                let f = |spec: &FieldSpec| GridFunction::from_fn(g, |x| spec.jet_c(z, x, l).v);
                let (re, im) = (f(&e.b1_re), f(&e.b1_im));
                let i = C64::new(0.0, 1.0);
                Ok(ContinuedCoefficients { a11: f(&e.a11), b1: re.zip_with(&im, |a, b| a + i * b)?, b1_conj: re.zip_with(&im, |a, b| a - i * b)?, m: f(&e.m) })
            }
            ModelSource::Metric(md) => reduce_continued(g, md, z),
        }
    }

    /// `(√a11, ∂_x √a11)` at an arbitrary point.
    pub fn speed(&self, t: f64, x: f64) -> (f64, f64) {
        let l = self.grid.length();
        let (a, ax) = match &self.source {
            ModelSource::Explicit(e) => {
                let j = e.a11.jet(t, x, l);
                (j.v, j.x)
            }
            ModelSource::Metric(md) => {
                let c = md.c.jet(t, x, l);
                let h = md.h.jet(t, x, l);
                (c.v / h.v, (c.x * h.v - c.v * h.x) / (h.v * h.v))
            }
        };
        let s = a.sqrt();
        (s, 0.5 * ax / s)
    }
}

fn min_re(f: &GridFunction) -> f64 {
    f.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
}

/// Model coefficients of the metric operator at complex time `z`.
///
/// With `w = c^{1/4}h^{-1/4}`, `κ = c^{1/2}h^{-1/2}`, `Ã = A₁ - ∂_x F`:
/// `a11 = c/h`, `b1 = -i Ã a11`, `m = Ã² a11 - w(κw')' + cρ - b⁻¹∂_t²b`.
fn reduce_continued(grid: &SpatialGrid, md: &MetricData, z: C64) -> Result<ContinuedCoefficients> {
    let l = grid.length();
    let i = C64::new(0.0, 1.0);
    let dgauge = md.v.sample_time_integral_c(grid, z).spectral_derivative(1)?;
    let n = grid.n();
    let (mut a11, mut b1, mut b1c, mut m) = (vec![], vec![], vec![], vec![]);
    for j in 0..n {
        let x = grid.node(j);
        let c = md.c.jet_c(z, x, l);
        let h = md.h.jet_c(z, x, l);
        let rho = md.rho.jet_c(z, x, l).v;
        let a_tilde = md.a1.jet_c(z, x, l).v - dgauge.values()[j];
        let a = c.v / h.v;
        // w(κw')' = (c/h)(3ℓ'² + ℓ'') with ℓ = (ln c - ln h)/4
        let lx = (c.x / c.v - h.x / h.v) * 0.25;
        let lxx = (c.xx / c.v - (c.x / c.v).powi(2) - h.xx / h.v + (h.x / h.v).powi(2)) * 0.25;
        let wkw = a * (lx * lx * 3.0 + lxx);
        // b⁻¹∂_t²b = L_t² + L_tt with L = (ln h - ln c)/4
        let lt = (h.t / h.v - c.t / c.v) * 0.25;
        let ltt = (h.tt / h.v - (h.t / h.v).powi(2) - c.tt / c.v + (c.t / c.v).powi(2)) * 0.25;
        a11.push(a);
        b1.push(-i * a_tilde * a);
        b1c.push(i * a_tilde * a);
        m.push(a_tilde * a_tilde * a - wkw + c.v * rho - (lt * lt + ltt));
    }
    Ok(ContinuedCoefficients {
        a11: GridFunction::new(grid, a11)?,
        b1: GridFunction::new(grid, b1)?,
        b1_conj: GridFunction::new(grid, b1c)?,
        m: GridFunction::new(grid, m)?,
    })
}

fn reduce_at(grid: &SpatialGrid, md: &MetricData, t: f64) -> Result<ModelSnapshot> {
    let l = grid.length();
    let mut conformal = Vec::with_capacity(grid.n());
    for j in 0..grid.n() {
        let x = grid.node(j);
        let (c, h) = (md.c.value(t, x, l), md.h.value(t, x, l));
        if !(c > 0.0 && h > 0.0) {
            return Err(Error::Hypothesis(format!("metric not positive at t={t}, x={x}")));
        }
        conformal.push(C64::new((h / c).powf(0.25), 0.0));
    }
    let k = reduce_continued(grid, md, C64::new(t, 0.0))?;
    let real = |f: &GridFunction| f.map(|v| C64::new(v.re, 0.0));
    Ok(ModelSnapshot {
        t,
        a11: real(&k.a11),
        b1: k.b1,
        m: real(&k.m),
        conformal: GridFunction::new(grid, conformal)?,
        gauge: md.v.sample_time_integral(grid, t),
    })
}

/// Reduces metric data to model coefficients on `[0, t_max]`.
pub fn reduce_to_model(grid: &SpatialGrid, md: &MetricData, t_max: f64) -> Result<ModelCoefficients> {
    ModelCoefficients::new(grid, ModelSource::Metric(md.clone()), t_max)
}

/// Seeded band-limited test functions with modes `1 ≤ |ν| ≤ band`.
pub fn test_battery(grid: &SpatialGrid, count: usize, band: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut hat = vec![C64::new(0.0, 0.0); grid.n()];
            for nu in -(band as i64)..=(band as i64) {
                let decay = 1.0 / (1.0 + (nu as f64).powi(2));
                hat[grid.index_of_mode(nu)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
            }
            grid.ifft(&mut hat);
            GridFunction::new(grid, hat).expect("grid length")
        })
        .collect()
}

/// Relative mismatch between the metric operator `P` and
/// `c^{-1/2}h^{-1/2} b e^{-iF}(∂_t² + a) e^{iF} b` on `e^{iωt} g(x)`.
///
/// `P` is evaluated in its covariant form from the metric jets; the right
/// side goes through the reduced coefficients.
pub fn factorization_residual(model: &ModelCoefficients, md: &MetricData, t: f64, omega: f64, g: &GridFunction) -> Result<f64> {
    let grid = model.grid();
    let l = grid.length();
    let n = grid.n();
    let i = C64::new(0.0, 1.0);
    let phase = C64::from_polar(1.0, omega * t);
    let psi = g.scale(phase);
    let snap = model.at(t)?;
    let jets: Vec<_> = (0..n)
        .map(|j| {
            let x = grid.node(j);
            (md.c.jet(t, x, l), md.h.jet(t, x, l), md.v.jet(t, x, l), md.a1.value(t, x, l), md.rho.value(t, x, l))
        })
        .collect();
    let pointwise = |f: &dyn Fn(usize) -> C64| GridFunction::new(grid, (0..n).map(f).collect::<Vec<_>>());

    // time part: c^{-1/2}h^{-1/2} (∂_t + iV) G (∂_t + iV) ψ with G = c^{-1/2}h^{1/2}
    let time_part = pointwise(&|j| {
        let (c, h, v, _, _) = jets[j];
        let gg = c.v.powf(-0.5) * h.v.sqrt();
        let gt = gg * (-0.5 * c.t / c.v + 0.5 * h.t / h.v);
        let w = omega + v.v;
        let val = i * (gt * w + gg * v.t) - C64::new(gg * w * w, 0.0);
        val * psi.values()[j] / (c.v.sqrt() * h.v.sqrt())
    })?;
    // space part: -c^{-1/2}h^{-1/2} (∂ + iA) c^{1/2}h^{-1/2} (∂ + iA) ψ
    let cov = |f: &GridFunction| -> Result<GridFunction> {
        let df = f.spectral_derivative(1)?;
        pointwise(&|j| df.values()[j] + i * jets[j].3 * f.values()[j])
    };
    let inner = cov(&psi)?;
    let weighted = pointwise(&|j| inner.values()[j] * (jets[j].0.v.sqrt() / jets[j].1.v.sqrt()))?;
    let outer = cov(&weighted)?;
    let space_part = pointwise(&|j| -outer.values()[j] / (jets[j].0.v.sqrt() * jets[j].1.v.sqrt()))?;
    let mass = pointwise(&|j| jets[j].4 * psi.values()[j])?;
    let lhs = time_part.add(&space_part)?.add(&mass)?;

    // right side: Φ = e^{iF} b ψ; ∂_t²Φ from analytic jets, a Φ from the snapshot
    let phi = pointwise(&|j| C64::from_polar(1.0, snap.gauge.values()[j].re) * snap.conformal.values()[j] * psi.values()[j])?;
    let phi_tt = pointwise(&|j| {
        let (c, h, v, _, _) = jets[j];
        let b = snap.conformal.values()[j].re;
        let lt = 0.25 * (h.t / h.v - c.t / c.v);
        let ltt = 0.25 * (h.tt / h.v - (h.t / h.v).powi(2) - c.tt / c.v + (c.t / c.v).powi(2));
        let bt = b * lt;
        let btt = b * (lt * lt + ltt);
        let w = v.v + omega;
        let factor = i * v.t * b + i * w * bt * 2.0 + btt - C64::new(w * w * b, 0.0);
        factor * C64::from_polar(1.0, snap.gauge.values()[j].re) * psi.values()[j]
    })?;
    let inside = phi_tt.add(&snap.apply(&phi)?)?;
    let rhs = pointwise(&|j| {
        let (c, h, _, _, _) = jets[j];
        let b = snap.conformal.values()[j].re;
        inside.values()[j] * C64::from_polar(1.0, -snap.gauge.values()[j].re) * b / (c.v.sqrt() * h.v.sqrt())
    })?;
    let scale = lhs.max_abs().max(f64::MIN_POSITIVE);
    Ok(lhs.sub(&rhs)?.max_abs() / scale)
}

/// Worst factorization residual over a seeded battery, several times and frequencies.
pub fn factorization_check(model: &ModelCoefficients, md: &MetricData, t_max: f64, seed: u64) -> Result<f64> {
    let grid = model.grid();
    let battery = test_battery(grid, 8, grid.n() / 8, seed);
    let mut worst = 0.0f64;
    for &t in &[0.0, 0.37 * t_max, t_max] {
        for &omega in &[1.0, -2.5] {
            for g in &battery {
                worst = worst.max(factorization_residual(model, md, t, omega, g)?);
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: f64,
    pub k: f64,
}

impl PhasePoint {
    pub fn new(x: f64, k: f64) -> Result<Self> {
        if k == 0.0 || !k.is_finite() || !x.is_finite() {
            return Err(Error::InvalidArgument("phase point needs finite x and k ≠ 0".into()));
        }
        Ok(Self { x, k })
    }
}

/// `Plus` flows with Hamiltonian `-ε₁`, `Minus` with `+ε₁`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowSign {
    Plus,
    Minus,
}

impl FlowSign {
    fn factor(self) -> f64 {
        match self {
            FlowSign::Plus => -1.0,
            FlowSign::Minus => 1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            FlowSign::Plus => FlowSign::Minus,
            FlowSign::Minus => FlowSign::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    pub tol: f64,
    /// Trajectories with `|k| < k_min_ratio·|k₀|` are rejected.
    pub k_min_ratio: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { tol: 1e-11, k_min_ratio: 1e-6, max_steps: 1 << 16 }
    }
}

fn flow_rhs(model: &ModelCoefficients, sign: f64, t: f64, p: (f64, f64)) -> (f64, f64) {
    let (s, sx) = model.speed(t, p.0);
    // H = sign·s(t,x)|k|
    (sign * s * p.1.signum(), -sign * sx * p.1.abs())
}

fn rk4_flow(model: &ModelCoefficients, sign: f64, t0: f64, t1: f64, p: (f64, f64), steps: usize, k_min: f64) -> Result<(f64, f64)> {
    let h = (t1 - t0) / steps as f64;
    let mut y = p;
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let add = |y: (f64, f64), k: (f64, f64), f: f64| (y.0 + f * k.0, y.1 + f * k.1);
        let k1 = flow_rhs(model, sign, t, y);
        let k2 = flow_rhs(model, sign, t + 0.5 * h, add(y, k1, 0.5 * h));
        let k3 = flow_rhs(model, sign, t + 0.5 * h, add(y, k2, 0.5 * h));
        let k4 = flow_rhs(model, sign, t + h, add(y, k3, h));
        y = (y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0), y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1));
        if !(y.1.abs() >= k_min) {
            return Err(Error::Trajectory(format!("|k| = {:e} below {k_min:e} at t = {}", y.1.abs(), t + h)));
        }
    }
    Ok(y)
}

/// Flow map `Φ(t1, t0)` applied to `p`, with step doubling until the
/// endpoint moves by less than `opts.tol` (relative in `k`).
pub fn hamiltonian_flow(model: &ModelCoefficients, sign: FlowSign, t1: f64, t0: f64, p: PhasePoint, opts: FlowOptions) -> Result<PhasePoint> {
    if t1 == t0 {
        return Ok(p);
    }
    let k_min = opts.k_min_ratio * p.k.abs();
    let mut steps = ((t1 - t0).abs() * 64.0).ceil().max(4.0) as usize;
    let mut prev = rk4_flow(model, sign.factor(), t0, t1, (p.x, p.k), steps, k_min)?;
    loop {
        steps *= 2;
        if steps > opts.max_steps {
            return Err(Error::NoConvergence { change: f64::NAN, tol: opts.tol });
        }
        let next = rk4_flow(model, sign.factor(), t0, t1, (p.x, p.k), steps, k_min)?;
        let change = (next.0 - prev.0).abs().max((next.1 - prev.1).abs() / p.k.abs());
        prev = next;
        if change < opts.tol {
            return Ok(PhasePoint { x: prev.0, k: prev.1 });
        }
    }
}

/// Determinant of the flow Jacobian by central differences.
pub fn flow_jacobian_det(model: &ModelCoefficients, sign: FlowSign, t1: f64, t0: f64, p: PhasePoint, opts: FlowOptions) -> Result<f64> {
    let dx = 1e-5;
    let dk = 1e-5 * p.k.abs();
    let f = |x: f64, k: f64| hamiltonian_flow(model, sign, t1, t0, PhasePoint { x, k }, opts);
    let (xp, xm) = (f(p.x + dx, p.k)?, f(p.x - dx, p.k)?);
    let (kp, km) = (f(p.x, p.k + dk)?, f(p.x, p.k - dk)?);
    let j11 = (xp.x - xm.x) / (2.0 * dx);
    let j21 = (xp.k - xm.k) / (2.0 * dx);
    let j12 = (kp.x - km.x) / (2.0 * dk);
    let j22 = (kp.k - km.k) / (2.0 * dk);
    Ok(j11 * j22 - j12 * j21)
}

/// Random phase points for sampling checks.
pub fn sample_phase_points(grid: &SpatialGrid, count: usize, k_range: (f64, f64), seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = rng.gen_range(0.0..grid.length());
            let k = rng.gen_range(k_range.0..k_range.1) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            PhasePoint { x, k }
        })
        .collect()
}

/// Periodized Gaussian packet of width `|k|^{-1/2}` centred at `p`.
pub fn wave_packet(grid: &SpatialGrid, p: PhasePoint) -> GridFunction {
    let l = grid.length();
    let sigma2 = 1.0 / p.k.abs();
    GridFunction::from_fn(grid, |x| {
        let env: f64 = (-3..=3).map(|m| (-(x - p.x + m as f64 * l).powi(2) / (2.0 * sigma2)).exp()).sum();
        C64::from_polar(env, p.k * x)
    })
}

#[derive(Clone, Copy, Debug)]
pub struct EgorovOptions {
    /// Packet centres per frequency (each used with both signs of `k`).
    pub points: usize,
    /// Lower packet mode; the check also runs at twice this mode.
    pub base_mode: usize,
    pub seed: u64,
    pub flow: FlowOptions,
}

impl Default for EgorovOptions {
    fn default() -> Self {
        Self { points: 4, base_mode: 16, seed: 7, flow: FlowOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EgorovReport {
    pub t: f64,
    pub modes: [usize; 2],
    /// Max deviation relative to `max |a|`, per frequency, for `FlowSign::Plus`.
    pub deviation_plus: [f64; 2],
    pub deviation_minus: [f64; 2],
    /// Sign whose deviation is smaller at the higher frequency.
    pub sign: FlowSign,
    /// `deviation(low) / deviation(high)` for the chosen sign.
    pub ratio: f64,
}

fn expectation(a: &CMat, w: &[C64]) -> C64 {
    let aw = a * linalg::col_vec(w);
    linalg::dot(w, &linalg::col_to_vec(&aw, 0)) / linalg::dot(w, w)
}

/// Packet test of `u₊(0,t) Q(a) u₊(t,0) ≈ Q(a ∘ Φ(t,0))` for a degree-0 symbol.
///
/// A packet at `p` is propagated by `u₊(t,0)`; its `Q(a)` expectation is
/// compared with that of a fresh packet placed at `Φ(t,0)p`, for both flow
/// signs. Both sides equal at `t = 0`.
pub fn egorov_check(a: &PolyhomSymbol, t: f64, bundle: &ParametrixBundle, opts: EgorovOptions) -> Result<EgorovReport> {
    if a.top_order() != 0.0 {
        return Err(Error::InvalidArgument(format!("egorov check needs a degree-0 symbol, got {}", a.top_order())));
    }
    let grid = bundle.grid();
    let n = grid.n();
    let modes = [opts.base_mode, 2 * opts.base_mode];
    let qa = quantize(a).into_mat();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let centres = sample_phase_points(grid, opts.points, (1.0, 2.0), opts.seed);
    let mut dev = [[0.0f64; 2]; 2];
    for (fi, &mode) in modes.iter().enumerate() {
        let k0 = mode as f64 * grid.kappa();
        let points: Vec<PhasePoint> = centres.iter().flat_map(|c| [PhasePoint { x: c.x, k: k0 }, PhasePoint { x: c.x, k: -k0 }]).collect();
        let packets: Vec<GridFunction> = points.iter().map(|&p| wave_packet(grid, p)).collect();
        let v = CMat::from_fn(n, packets.len(), |i, j| packets[j].values()[i]);
        let w = bundle.propagate(Branch::Plus, 0.0, &[t], &v)?.remove(0);
        for (j, &p) in points.iter().enumerate() {
            let got = expectation(&qa, w.col_as_slice(j));
            for (si, sign) in [FlowSign::Plus, FlowSign::Minus].into_iter().enumerate() {
                let q = hamiltonian_flow(bundle.model(), sign, t, 0.0, p, opts.flow)?;
                if q.k.abs() / grid.kappa() > (n / 4) as f64 {
                    return Err(Error::Trajectory(format!("packet frequency {:.1} leaves the resolved band", q.k)));
                }
                let fresh = wave_packet(grid, q);
                let want = expectation(&qa, fresh.values());
                dev[si][fi] = dev[si][fi].max((got - want).norm() / scale);
            }
        }
    }
    let sign = if dev[0][1] <= dev[1][1] { FlowSign::Plus } else { FlowSign::Minus };
    let d = if sign == FlowSign::Plus { dev[0] } else { dev[1] };
    let ratio = if d[1] > 0.0 { d[0] / d[1] } else { f64::INFINITY };
    Ok(EgorovReport { t, modes, deviation_plus: dev[0], deviation_minus: dev[1], sign, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{SpaceProfile, TimeProfile};

    fn grid() -> SpatialGrid {
        SpatialGrid::periodic_2pi(64).unwrap()
    }

    fn trivial(m2: f64) -> MetricData {
        MetricData { c: FieldSpec::constant(1.0), h: FieldSpec::constant(1.0), v: FieldSpec::zero(), a1: FieldSpec::zero(), rho: FieldSpec::constant(m2) }
    }

    #[test]
    fn flat_metric_reduces_trivially() {
        let g = grid();
        let md = trivial(2.0);
        let model = reduce_to_model(&g, &md, 1.0).unwrap();
        let s = model.at(0.5).unwrap();
        assert!(s.a11.values().iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
        assert!(s.b1.max_abs() < 1e-15);
        assert!(s.m.values().iter().all(|v| (v - C64::new(2.0, 0.0)).norm() < 1e-14));
        assert!(s.conformal.values().iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
        assert!(s.gauge.max_abs() == 0.0);
        assert!(model.is_static());
    }

    #[test]
    fn ultrastatic_factorization() {
        let g = grid();
        let mut md = trivial(1.0);
        md.h = FieldSpec::spatial(SpaceProfile { mean: 1.0, cos: vec![0.2], sin: vec![0.1] });
        let model = reduce_to_model(&g, &md, 1.0).unwrap();
        assert!(model.at(0.3).unwrap().gauge.max_abs() == 0.0);
        assert!(factorization_check(&model, &md, 1.0, 7).unwrap() < 1e-8);
    }

    #[test]
    fn static_electric_potential_gauge() {
        let g = grid();
        let mut md = trivial(1.0);
        md.v = FieldSpec::spatial(SpaceProfile { mean: 0.0, cos: vec![], sin: vec![0.5] });
        let model = reduce_to_model(&g, &md, 1.0).unwrap();
        let s = model.at(0.8).unwrap();
        for (j, x) in g.nodes().iter().enumerate() {
            assert!((s.gauge.values()[j].re - 0.8 * 0.5 * x.sin()).abs() < 1e-14);
        }
        assert!(factorization_check(&model, &md, 1.0, 3).unwrap() < 1e-8);
    }

    #[test]
    fn time_dependent_metric_factorization() {
        let g = grid();
        let md = MetricData {
            c: FieldSpec {
                time: TimeProfile { poly: vec![1.0, 0.1], sin_amp: 0.0, sin_freq: 0.0, sin_phase: 0.0 },
                time_power: 1.0,
                space: SpaceProfile { mean: 1.0, cos: vec![0.1], sin: vec![] },
                space_power: 1.0,
            },
            h: FieldSpec {
                time: TimeProfile { poly: vec![1.0], sin_amp: 0.2, sin_freq: 1.5, sin_phase: 0.0 },
                time_power: -2.0,
                space: SpaceProfile { mean: 1.0, cos: vec![0.15], sin: vec![] },
                space_power: -1.0,
            },
            v: FieldSpec {
                time: TimeProfile { poly: vec![1.0, 0.5], sin_amp: 0.0, sin_freq: 0.0, sin_phase: 0.0 },
                time_power: 1.0,
                space: SpaceProfile { mean: 0.1, cos: vec![], sin: vec![0.3] },
                space_power: 1.0,
            },
            a1: FieldSpec::spatial(SpaceProfile { mean: 0.2, cos: vec![0.1], sin: vec![] }),
            rho: FieldSpec::constant(1.0),
        };
        let model = reduce_to_model(&g, &md, 1.0).unwrap();
        assert!(factorization_check(&model, &md, 1.0, 11).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_degenerate_metric() {
        let g = grid();
        let mut md = trivial(1.0);
        md.c = FieldSpec::spatial(SpaceProfile { mean: 0.5, cos: vec![0.7], sin: vec![] });
        assert!(matches!(reduce_to_model(&g, &md, 1.0), Err(Error::Hypothesis(_))));
    }

    fn explicit(a11: SpaceProfile) -> ModelCoefficients {
        let e = ExplicitCoefficients { a11: FieldSpec::spatial(a11), b1_re: FieldSpec::zero(), b1_im: FieldSpec::zero(), m: FieldSpec::constant(1.0) };
        ModelCoefficients::new(&grid(), ModelSource::Explicit(e), 1.0).unwrap()
    }

    #[test]
    fn constant_speed_translates() {
        let model = explicit(SpaceProfile::constant(1.0));
        let p = PhasePoint::new(1.0, 5.0).unwrap();
        let q = hamiltonian_flow(&model, FlowSign::Plus, 0.7, 0.0, p, FlowOptions::default()).unwrap();
        assert!((q.k - 5.0).abs() < 1e-14);
        assert!(((q.x - p.x).abs() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn flow_is_degree_zero_homogeneous() {
        let model = explicit(SpaceProfile { mean: 1.0, cos: vec![], sin: vec![0.5] });
        let opts = FlowOptions::default();
        let p = PhasePoint::new(0.4, 3.0).unwrap();
        let a = hamiltonian_flow(&model, FlowSign::Minus, 0.9, 0.1, p, opts).unwrap();
        let b = hamiltonian_flow(&model, FlowSign::Minus, 0.9, 0.1, PhasePoint { x: 0.4, k: 6.0 }, opts).unwrap();
        assert!((a.x - b.x).abs() < 1e-10);
        assert!((2.0 * a.k - b.k).abs() < 1e-9);
    }

    #[test]
    fn flow_is_symplectic_and_composes() {
        let model = explicit(SpaceProfile { mean: 1.0, cos: vec![], sin: vec![0.5] });
        let opts = FlowOptions::default();
        let p = PhasePoint::new(2.0, -4.0).unwrap();
        let det = flow_jacobian_det(&model, FlowSign::Plus, 1.0, 0.0, p, opts).unwrap();
        assert!((det - 1.0).abs() < 1e-6, "{det}");
        let mid = hamiltonian_flow(&model, FlowSign::Plus, 0.4, 0.0, p, opts).unwrap();
        let end = hamiltonian_flow(&model, FlowSign::Plus, 1.0, 0.4, mid, opts).unwrap();
        let direct = hamiltonian_flow(&model, FlowSign::Plus, 1.0, 0.0, p, opts).unwrap();
        assert!((end.x - direct.x).abs() < 1e-9 && (end.k - direct.k).abs() < 1e-9);
    }

    fn egorov_bundle(n: usize) -> ParametrixBundle {
        let g = SpatialGrid::periodic_2pi(n).unwrap();
        let e = ExplicitCoefficients {
            a11: FieldSpec::spatial(SpaceProfile { mean: 1.0, cos: vec![0.3], sin: vec![] }),
            b1_re: FieldSpec::zero(),
            b1_im: FieldSpec::zero(),
            m: FieldSpec::constant(1.0),
        };
        let model = ModelCoefficients::new(&g, ModelSource::Explicit(e), 1.0).unwrap();
        let opts = crate::parametrix::ParametrixOptions { truncation: 4, window_nodes: 17, ..Default::default() };
        ParametrixBundle::build(&model, &opts).unwrap()
    }

    #[test]
    fn egorov_identity_at_equal_times() {
        let b = egorov_bundle(64);
        let a = PolyhomSymbol::from_function(&GridFunction::from_real_fn(b.grid(), |x| x.sin()));
        let r = egorov_check(&a, 0.0, &b, EgorovOptions { base_mode: 8, ..Default::default() }).unwrap();
        assert!(r.deviation_plus.iter().chain(&r.deviation_minus).all(|d| *d < 1e-12), "{r:?}");
    }

    #[test]
    fn egorov_deviation_halves() {
        let b = egorov_bundle(256);
        let a = PolyhomSymbol::from_function(&GridFunction::from_real_fn(b.grid(), |x| x.sin()));
        let r = egorov_check(&a, 0.8, &b, EgorovOptions { base_mode: 16, ..Default::default() }).unwrap();
        assert_eq!(r.sign, FlowSign::Plus, "{r:?}");
        assert!((1.5..=3.0).contains(&r.ratio), "{r:?}");
        assert!(r.deviation_minus[1] > 10.0 * r.deviation_plus[1], "{r:?}");
    }
}
