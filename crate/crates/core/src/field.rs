//! Analytic space-time coefficient fields `f(t,x) = τ(t)^p · X(x)^q`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpatialGrid};

/// `τ(t) = Σ poly_i t^i + amp · sin(freq·t + phase)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeProfile {
    #[serde(default = "one_poly")]
    pub poly: Vec<f64>,
    #[serde(default)]
    pub sin_amp: f64,
    #[serde(default)]
    pub sin_freq: f64,
    #[serde(default)]
    pub sin_phase: f64,
}

fn one_poly() -> Vec<f64> {
    vec![1.0]
}

impl Default for TimeProfile {
    fn default() -> Self {
        Self { poly: one_poly(), sin_amp: 0.0, sin_freq: 0.0, sin_phase: 0.0 }
    }
}

impl TimeProfile {
    pub fn is_constant(&self) -> bool {
        self.poly.iter().skip(1).all(|&c| c == 0.0) && (self.sin_amp == 0.0 || self.sin_freq == 0.0)
    }

    /// `(τ, τ', τ'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for (i, &c) in self.poly.iter().enumerate() {
            let i = i as i32;
            v += c * t.powi(i);
            if i >= 1 {
                d1 += c * i as f64 * t.powi(i - 1);
            }
            if i >= 2 {
                d2 += c * (i * (i - 1)) as f64 * t.powi(i - 2);
            }
        }
        let arg = self.sin_freq * t + self.sin_phase;
        v += self.sin_amp * arg.sin();
        d1 += self.sin_amp * self.sin_freq * arg.cos();
        d2 -= self.sin_amp * self.sin_freq * self.sin_freq * arg.sin();
        (v, d1, d2)
    }

    /// `(τ, τ', τ'')` continued to complex `z`.
    pub fn eval_c(&self, z: C64) -> (C64, C64, C64) {
        let zero = C64::new(0.0, 0.0);
        let (mut v, mut d1, mut d2) = (zero, zero, zero);
        for (i, &c) in self.poly.iter().enumerate() {
            let i = i as i32;
            v += c * z.powi(i);
            if i >= 1 {
                d1 += c * i as f64 * z.powi(i - 1);
            }
            if i >= 2 {
                d2 += c * (i * (i - 1)) as f64 * z.powi(i - 2);
            }
        }
        let arg = z * self.sin_freq + self.sin_phase;
        v += arg.sin() * self.sin_amp;
        d1 += arg.cos() * (self.sin_amp * self.sin_freq);
        d2 -= arg.sin() * (self.sin_amp * self.sin_freq * self.sin_freq);
        (v, d1, d2)
    }
}

/// `X(x) = mean + Σ_j cos_j cos((j+1)κx) + sin_j sin((j+1)κx)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpaceProfile {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl SpaceProfile {
    pub fn constant(c: f64) -> Self {
        Self { mean: c, cos: Vec::new(), sin: Vec::new() }
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    /// `(X, X', X'')` at `x` on a torus of length `length`.
    pub fn eval(&self, x: f64, length: f64) -> (f64, f64, f64) {
        let kappa = 2.0 * std::f64::consts::PI / length;
        let (mut v, mut d1, mut d2) = (self.mean, 0.0, 0.0);
        for (j, &c) in self.cos.iter().enumerate() {
            let w = (j + 1) as f64 * kappa;
            v += c * (w * x).cos();
            d1 -= c * w * (w * x).sin();
            d2 -= c * w * w * (w * x).cos();
        }
        for (j, &s) in self.sin.iter().enumerate() {
            let w = (j + 1) as f64 * kappa;
            v += s * (w * x).sin();
            d1 += s * w * (w * x).cos();
            d2 -= s * w * w * (w * x).sin();
        }
        (v, d1, d2)
    }

    fn bandwidth(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }
}

/// A real field `τ(t)^time_power · X(x)^space_power`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default)]
    pub time: TimeProfile,
    #[serde(default = "unit")]
    pub time_power: f64,
    pub space: SpaceProfile,
    #[serde(default = "unit")]
    pub space_power: f64,
}

fn unit() -> f64 {
    1.0
}

/// Value and derivatives of a field at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub v: f64,
    pub t: f64,
    pub tt: f64,
    pub x: f64,
    pub xx: f64,
}

fn power_jet(base: (f64, f64, f64), p: f64) -> (f64, f64, f64) {
    let (b, b1, b2) = base;
    if p == 1.0 {
        return base;
    }
    if p == 0.0 {
        return (1.0, 0.0, 0.0);
    }
    let v = b.powf(p);
    let d1 = p * b.powf(p - 1.0) * b1;
    let d2 = p * ((p - 1.0) * b.powf(p - 2.0) * b1 * b1 + b.powf(p - 1.0) * b2);
    (v, d1, d2)
}

/// Time jet continued to complex `t`; the space factor stays real.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexJet {
    pub v: C64,
    pub t: C64,
    pub tt: C64,
    pub x: C64,
    pub xx: C64,
}

fn power_jet_c(base: (C64, C64, C64), p: f64) -> (C64, C64, C64) {
    let (b, b1, b2) = base;
    if p == 1.0 {
        return base;
    }
    if p == 0.0 {
        return (C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    }
    let (v, vm1, vm2) = if p.fract() == 0.0 {
        let k = p as i32;
        (b.powi(k), b.powi(k - 1), b.powi(k - 2))
    } else {
        (b.powf(p), b.powf(p - 1.0), b.powf(p - 2.0))
    };
    (v, vm1 * b1 * p, (vm2 * b1 * b1 * (p - 1.0) + vm1 * b2) * p)
}

impl FieldSpec {
    pub fn constant(c: f64) -> Self {
        Self { time: TimeProfile::default(), time_power: 1.0, space: SpaceProfile::constant(c), space_power: 1.0 }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn spatial(space: SpaceProfile) -> Self {
        Self { time: TimeProfile::default(), time_power: 1.0, space, space_power: 1.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.space.mean == 0.0 && self.space.is_constant()
    }

    pub fn is_static(&self) -> bool {
        self.time.is_constant() || self.time_power == 0.0
    }

    pub fn jet(&self, t: f64, x: f64, length: f64) -> FieldJet {
        let (tv, t1, t2) = power_jet(self.time.eval(t), self.time_power);
        let (xv, x1, x2) = power_jet(self.space.eval(x, length), self.space_power);
        FieldJet { v: tv * xv, t: t1 * xv, tt: t2 * xv, x: tv * x1, xx: tv * x2 }
    }

    /// Analytic continuation of [`FieldSpec::jet`] in `t`.
    pub fn jet_c(&self, z: C64, x: f64, length: f64) -> ComplexJet {
        let (tv, t1, t2) = power_jet_c(self.time.eval_c(z), self.time_power);
        let (xv, x1, x2) = power_jet(self.space.eval(x, length), self.space_power);
        ComplexJet { v: tv * xv, t: t1 * xv, tt: t2 * xv, x: tv * x1, xx: tv * x2 }
    }

    /// `∫_0^z f(s, ·) ds` along the straight path, for complex `z`.
    pub fn sample_time_integral_c(&self, grid: &SpatialGrid, z: C64) -> GridFunction {
        let l = grid.length();
        let tau = |u: f64| power_jet_c(self.time.eval_c(z * u), self.time_power).0;
        let re = gauss_integral(&|u| tau(u).re, 0.0, 1.0);
        let im = gauss_integral(&|u| tau(u).im, 0.0, 1.0);
        let integral = z * C64::new(re, im);
        GridFunction::from_fn(grid, |x| integral * power_jet(self.space.eval(x, l), self.space_power).0)
    }

    pub fn value(&self, t: f64, x: f64, length: f64) -> f64 {
        self.jet(t, x, length).v
    }

    /// Samples `f(t, ·)` on the grid.
    pub fn sample(&self, grid: &SpatialGrid, t: f64) -> GridFunction {
        let l = grid.length();
        GridFunction::from_real_fn(grid, |x| self.value(t, x, l))
    }

    /// Samples `∂_t^order f(t, ·)` for `order ≤ 2`.
    pub fn sample_dt(&self, grid: &SpatialGrid, t: f64, order: usize) -> GridFunction {
        let l = grid.length();
        GridFunction::from_real_fn(grid, |x| {
            let j = self.jet(t, x, l);
            match order {
                0 => j.v,
                1 => j.t,
                _ => j.tt,
            }
        })
    }

    /// `∫_0^t f(s, ·) ds` on the grid (composite Gauss-Legendre in time).
    pub fn sample_time_integral(&self, grid: &SpatialGrid, t: f64) -> GridFunction {
        let l = grid.length();
        let tau = |s: f64| power_jet(self.time.eval(s), self.time_power).0;
        let integral = gauss_integral(&tau, 0.0, t);
        GridFunction::from_real_fn(grid, |x| integral * power_jet(self.space.eval(x, l), self.space_power).0)
    }

    /// Checks that non-integer powers act on positive bases over `[0, t_max]`.
    pub fn validate(&self, name: &str, t_max: f64) -> Result<()> {
        let scalars = [self.time.sin_amp, self.time.sin_freq, self.time.sin_phase, self.space.mean, self.time_power, self.space_power];
        let finite = self.time.poly.iter().chain(&self.space.cos).chain(&self.space.sin).chain(&scalars).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config(format!("{name}: non-finite parameter")));
        }
        let samples = 512;
        if self.time_power.fract() != 0.0 || self.time_power < 0.0 {
            for i in 0..=samples {
                let t = t_max * i as f64 / samples as f64;
                if self.time.eval(t).0 <= 0.0 {
                    return Err(Error::Config(format!("{name}: time profile must stay positive for power {}", self.time_power)));
                }
            }
        }
        if self.space_power.fract() != 0.0 || self.space_power < 0.0 {
            for i in 0..samples {
                let x = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
                if self.space.eval(x, 2.0 * std::f64::consts::PI).0 <= 0.0 {
                    return Err(Error::Config(format!("{name}: space profile must stay positive for power {}", self.space_power)));
                }
            }
        }
        Ok(())
    }

    /// Highest spatial harmonic of the base profile.
    pub fn bandwidth(&self) -> usize {
        self.space.bandwidth()
    }
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Composite 8-point Gauss-Legendre quadrature with panels of width ≤ 1/16.
pub fn gauss_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let panels = (((b - a).abs() * 16.0).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    sum * 0.5 * h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn breathing() -> FieldSpec {
        FieldSpec {
            time: TimeProfile { poly: vec![1.0], sin_amp: 0.2, sin_freq: 1.5, sin_phase: 0.0 },
            time_power: -2.0,
            space: SpaceProfile { mean: 1.0, cos: vec![0.15], sin: vec![] },
            space_power: -1.0,
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let f = breathing();
        let (t, x, l) = (0.4, 1.3, 2.0 * std::f64::consts::PI);
        let j = f.jet(t, x, l);
        let h = 1e-4;
        let ft = (f.value(t + h, x, l) - f.value(t - h, x, l)) / (2.0 * h);
        let ftt = (f.value(t + h, x, l) - 2.0 * j.v + f.value(t - h, x, l)) / (h * h);
        let fx = (f.value(t, x + h, l) - f.value(t, x - h, l)) / (2.0 * h);
        assert!((j.t - ft).abs() < 1e-7);
        assert!((j.tt - ftt).abs() < 1e-5);
        assert!((j.x - fx).abs() < 1e-7);
    }

    #[test]
    fn complex_jet_matches_real_and_is_analytic() {
        let f = breathing();
        let (x, l) = (0.7, 2.0 * std::f64::consts::PI);
        let r = f.jet(0.3, x, l);
        let c = f.jet_c(C64::new(0.3, 0.0), x, l);
        assert!((c.v.re - r.v).abs() < 1e-14 && c.v.im == 0.0);
        assert!((c.tt.re - r.tt).abs() < 1e-12);
        // Cauchy-Riemann: derivative along the imaginary axis is i f'
        let z = C64::new(0.3, 0.2);
        let h = 1e-6;
        let di = (f.jet_c(z + C64::new(0.0, h), x, l).v - f.jet_c(z - C64::new(0.0, h), x, l).v) / (2.0 * h);
        assert!((di - C64::new(0.0, 1.0) * f.jet_c(z, x, l).t).norm() < 1e-7);
    }

    #[test]
    fn complex_time_integral_on_real_axis() {
        let g = SpatialGrid::periodic_2pi(8).unwrap();
        let f = breathing();
        let a = f.sample_time_integral(&g, 0.8);
        let b = f.sample_time_integral_c(&g, C64::new(0.8, 0.0));
        assert!(a.sub(&b).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn gauss_integrates_sine() {
        let v = gauss_integral(&|s: f64| (1.5 * s).sin(), 0.0, 1.0);
        assert!((v - (1.0 - 1.5f64.cos()) / 1.5).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_negative_base() {
        let mut f = breathing();
        f.space.cos = vec![1.5];
        assert!(f.validate("h", 1.0).is_err());
        assert!(breathing().validate("h", 1.0).is_ok());
    }

    #[test]
    fn toml_roundtrip_rejects_unknown() {
        let f = breathing();
        let s = toml::to_string(&f).unwrap();
        let g: FieldSpec = toml::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(toml::from_str::<FieldSpec>("bogus = 1\n[space]\nmean = 1.0\n").is_err());
    }
}
