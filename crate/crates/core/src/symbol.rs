//! Polyhomogeneous symbols in one space dimension.
//!
//! A component of degree `s` is `c₊(x)|k|^s` for `k > 0` and `c₋(x)|k|^s` for
//! `k < 0`. Components that are polynomials in `k` (integer `s ≥ 0` with
//! `c₊ = (-1)^s c₋`) are evaluated exactly; all others are multiplied by the
//! cutoff `χ(|k|)`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SpatialGrid};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Relative level below which Fourier coefficients count as round-off.
const ROUNDOFF_CHOP: f64 = 1e-14;

/// x-derivatives keep only modes `|ν| ≤ n / DEALIAS_DIVISOR`; higher modes of
/// smooth coefficients are round-off that `(κν)^β` would amplify.
const DEALIAS_DIVISOR: usize = 8;

/// Modes above the dealias band that are this small relative to the branch
/// maximum are dropped by [`PolyhomSymbol::denoised`].
const HIGH_MODE_FLOOR: f64 = 1e-8;

/// Degree-7 smoothstep: 0 for `s ≤ 1`, 1 for `s ≥ 2`.
pub fn cutoff(s: f64) -> f64 {
    if s <= 1.0 {
        0.0
    } else if s >= 2.0 {
        1.0
    } else {
        let t = s - 1.0;
        let t4 = t * t * t * t;
        t4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
    }
}

fn falling(s: f64, a: usize) -> f64 {
    (0..a).map(|i| s - i as f64).product()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[derive(Clone, Debug)]
pub struct HomogeneousComponent {
    pub degree: f64,
    pub cplus: GridFunction,
    pub cminus: GridFunction,
}

impl HomogeneousComponent {
    pub fn new(degree: f64, cplus: GridFunction, cminus: GridFunction) -> Result<Self> {
        if cplus.grid() != cminus.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { degree, cplus, cminus })
    }

    pub fn zero(grid: &SpatialGrid, degree: f64) -> Self {
        Self { degree, cplus: GridFunction::zeros(grid), cminus: GridFunction::zeros(grid) }
    }

    /// Same coefficient on both branches, i.e. `c(x)|k|^s`.
    pub fn even(degree: f64, c: GridFunction) -> Self {
        Self { degree, cplus: c.clone(), cminus: c }
    }

    pub fn branch(&self, plus: bool) -> &GridFunction {
        if plus {
            &self.cplus
        } else {
            &self.cminus
        }
    }

    /// True when the component is a polynomial in `k` (no cutoff needed).
    pub fn is_polynomial(&self) -> bool {
        let s = self.degree;
        if s < 0.0 || s.fract() != 0.0 {
            return self.is_zero();
        }
        let sign = if (s as i64) % 2 == 0 { 1.0 } else { -1.0 };
        let scale = self.cplus.max_abs().max(self.cminus.max_abs());
        if scale == 0.0 {
            return true;
        }
        let dev = self.cplus.values().iter().zip(self.cminus.values()).map(|(p, m)| (p - m * sign).norm()).fold(0.0, f64::max);
        dev <= 1e-12 * scale
    }

    pub fn is_zero(&self) -> bool {
        self.cplus.max_abs() == 0.0 && self.cminus.max_abs() == 0.0
    }

    pub fn max_abs(&self) -> f64 {
        self.cplus.max_abs().max(self.cminus.max_abs())
    }

    pub fn max_imag(&self) -> f64 {
        self.cplus.max_imag().max(self.cminus.max_imag())
    }

    /// `|k|^s` weight at wavenumber `k`, including the cutoff when needed.
    pub fn weight(&self, k: f64, polynomial: bool) -> f64 {
        let a = k.abs();
        if polynomial {
            if self.degree == 0.0 {
                1.0
            } else {
                a.powf(self.degree)
            }
        } else {
            let c = cutoff(a);
            if c == 0.0 {
                0.0
            } else {
                c * a.powf(self.degree)
            }
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64 + Copy) -> Result<Self> {
        Ok(Self { degree: self.degree, cplus: self.cplus.zip_with(&other.cplus, f)?, cminus: self.cminus.zip_with(&other.cminus, f)? })
    }

    fn map(&self, f: impl Fn(C64) -> C64 + Copy) -> Self {
        Self { degree: self.degree, cplus: self.cplus.map(f), cminus: self.cminus.map(f) }
    }
}

/// Truncated asymptotic sum with degrees `top, top-1, …, top-N`.
#[derive(Clone, Debug)]
pub struct PolyhomSymbol {
    grid: SpatialGrid,
    top_order: f64,
    components: Vec<HomogeneousComponent>,
    /// Every component below the stored ones vanishes identically.
    exact: bool,
}

impl PolyhomSymbol {
    pub fn new(grid: &SpatialGrid, top_order: f64, components: Vec<HomogeneousComponent>, exact: bool) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::SymbolShape("at least one component required".into()));
        }
        for (j, c) in components.iter().enumerate() {
            if c.degree != top_order - j as f64 {
                return Err(Error::SymbolShape(format!("component {j} has degree {} but {} expected", c.degree, top_order - j as f64)));
            }
            if c.cplus.grid() != grid || c.cminus.grid() != grid {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self { grid: grid.clone(), top_order, components, exact })
    }

    pub fn zero(grid: &SpatialGrid, top_order: f64, depth: usize) -> Self {
        let components = (0..=depth).map(|j| HomogeneousComponent::zero(grid, top_order - j as f64)).collect();
        Self { grid: grid.clone(), top_order, components, exact: true }
    }

    /// The k-independent symbol `f(x)`.
    pub fn from_function(f: &GridFunction) -> Self {
        Self { grid: f.grid().clone(), top_order: 0.0, components: vec![HomogeneousComponent::even(0.0, f.clone())], exact: true }
    }

    pub fn one(grid: &SpatialGrid) -> Self {
        Self::from_function(&GridFunction::constant(grid, C64::new(1.0, 0.0)))
    }

    /// The symbol `k`.
    pub fn wavenumber(grid: &SpatialGrid) -> Self {
        let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
        let c = HomogeneousComponent { degree: 1.0, cplus: one.clone(), cminus: one.scale(C64::new(-1.0, 0.0)) };
        Self { grid: grid.clone(), top_order: 1.0, components: vec![c], exact: true }
    }

    /// `c(x)|k|^s` as an exact single-component symbol.
    pub fn homogeneous(c: &GridFunction, s: f64) -> Self {
        Self { grid: c.grid().clone(), top_order: s, components: vec![HomogeneousComponent::even(s, c.clone())], exact: true }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn top_order(&self) -> f64 {
        self.top_order
    }

    pub fn components(&self) -> &[HomogeneousComponent] {
        &self.components
    }

    pub fn truncation(&self) -> usize {
        self.components.len() - 1
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn principal(&self) -> &HomogeneousComponent {
        &self.components[0]
    }

    /// Available depth: unlimited for exact symbols.
    pub fn depth(&self) -> usize {
        if self.exact {
            usize::MAX
        } else {
            self.truncation()
        }
    }

    /// Lowest retained degree; `-inf` for exact symbols.
    pub fn bottom(&self) -> f64 {
        if self.exact {
            f64::NEG_INFINITY
        } else {
            self.top_order - self.truncation() as f64
        }
    }

    /// Component `j`, or zero beyond the stored list of an exact symbol.
    pub fn component(&self, j: usize) -> Option<HomogeneousComponent> {
        match self.components.get(j) {
            Some(c) => Some(c.clone()),
            None if self.exact => Some(HomogeneousComponent::zero(&self.grid, self.top_order - j as f64)),
            None => None,
        }
    }

    /// Component at a given degree (zero above the top order).
    pub fn component_at_degree(&self, degree: f64) -> Option<HomogeneousComponent> {
        let j = self.top_order - degree;
        if j < 0.0 {
            return Some(HomogeneousComponent::zero(&self.grid, degree));
        }
        if j.fract() != 0.0 {
            return None;
        }
        self.component(j as usize)
    }

    /// The same components read as an exact symbol (zero below the last one);
    /// products then expose the error of the truncation itself.
    pub fn as_exact(&self) -> Self {
        Self { exact: true, ..self.clone() }
    }

    /// Restricts to at most `depth` subleading components.
    pub fn truncate(&self, depth: usize) -> Self {
        if depth >= self.truncation() && !self.exact {
            return self.clone();
        }
        let mut components = Vec::with_capacity(depth + 1);
        for j in 0..=depth {
            match self.component(j) {
                Some(c) => components.push(c),
                None => break,
            }
        }
        let exact = self.exact && self.components[components.len().min(self.components.len())..].iter().all(|c| c.is_zero());
        Self { grid: self.grid.clone(), top_order: self.top_order, components, exact }
    }

    /// Re-expresses with a higher declared top order (leading zeros).
    pub fn with_top(&self, top: f64) -> Result<Self> {
        let shift = top - self.top_order;
        if shift < 0.0 || shift.fract() != 0.0 {
            return Err(Error::SymbolShape(format!("cannot raise top {} to {top}", self.top_order)));
        }
        let mut components: Vec<_> = (0..shift as usize).map(|j| HomogeneousComponent::zero(&self.grid, top - j as f64)).collect();
        components.extend(self.components.iter().cloned());
        Ok(Self { grid: self.grid.clone(), top_order: top, components, exact: self.exact })
    }

    /// Point evaluation at node `j` and wavenumber `k`.
    pub fn eval_node(&self, j: usize, k: f64) -> C64 {
        let plus = k >= 0.0;
        self.components.iter().map(|c| c.branch(plus).values()[j] * c.weight(k, c.is_polynomial())).sum()
    }

    /// Evaluation at arbitrary `x` by trigonometric interpolation.
    pub fn eval(&self, x: f64, k: f64) -> C64 {
        let plus = k >= 0.0;
        self.components.iter().map(|c| c.branch(plus).interpolate(x) * c.weight(k, c.is_polynomial())).sum()
    }

    fn combine(&self, other: &Self, f: impl Fn(C64, C64) -> C64 + Copy) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let top = self.top_order.max(other.top_order);
        let bottom = self.bottom().max(other.bottom());
        let depth = if bottom == f64::NEG_INFINITY {
            let lo_a = self.top_order - self.truncation() as f64;
            let lo_b = other.top_order - other.truncation() as f64;
            (top - lo_a.min(lo_b)) as usize
        } else {
            let d = top - bottom;
            if d < 0.0 || d.fract() != 0.0 {
                return Err(Error::SymbolShape("degrees not aligned".into()));
            }
            d as usize
        };
        let mut components = Vec::with_capacity(depth + 1);
        for j in 0..=depth {
            let deg = top - j as f64;
            let a = self.component_at_degree(deg).ok_or_else(|| Error::SymbolShape("misaligned degrees".into()))?;
            let b = other.component_at_degree(deg).ok_or_else(|| Error::SymbolShape("misaligned degrees".into()))?;
            components.push(a.zip(&b, f)?);
        }
        Ok(Self { grid: self.grid.clone(), top_order: top, components, exact: self.exact && other.exact })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            grid: self.grid.clone(),
            top_order: self.top_order,
            components: self.components.iter().map(|c| c.map(move |v| v * s)).collect(),
            exact: self.exact,
        }
    }

    pub fn max_imag(&self) -> f64 {
        self.components.iter().map(|c| c.max_imag()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    /// Drops imaginary parts (used after verifying they are round-off).
    pub fn real_part(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            top_order: self.top_order,
            components: self.components.iter().map(|c| c.map(|v| C64::new(v.re, 0.0))).collect(),
            exact: self.exact,
        }
    }

    /// Zeroes x-modes above `n / 8` that sit at round-off level.
    ///
    /// Products of many coefficient factors leave noise there; quantization
    /// couples it into frequency pairs whose midpoint lies in the cutoff region.
    pub fn denoised(&self) -> Self {
        let grid = &self.grid;
        let n = grid.n();
        let clean = |f: &GridFunction| {
            let mut hat = f.values().to_vec();
            grid.fft(&mut hat);
            let top = hat.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (i, v) in hat.iter_mut().enumerate() {
                if grid.mode(i).unsigned_abs() as usize > n / DEALIAS_DIVISOR && v.norm() <= HIGH_MODE_FLOOR * top {
                    *v = ZERO;
                }
            }
            grid.ifft(&mut hat);
            gf(grid, hat)
        };
        let components = self.components.iter().map(|c| HomogeneousComponent { degree: c.degree, cplus: clean(&c.cplus), cminus: clean(&c.cminus) }).collect();
        Self { grid: grid.clone(), top_order: self.top_order, components, exact: self.exact }
    }

    pub fn to_json(&self) -> SymbolJson {
        let enc = |f: &GridFunction| f.values().iter().map(|v| [v.re, v.im]).collect();
        SymbolJson {
            n: self.grid.n(),
            length: self.grid.length(),
            top_order: self.top_order,
            truncation: self.truncation(),
            exact: self.exact,
            components: self.components.iter().map(|c| ComponentJson { degree: c.degree, cplus: enc(&c.cplus), cminus: enc(&c.cminus) }).collect(),
        }
    }

    pub fn from_json(j: &SymbolJson) -> Result<Self> {
        let grid = SpatialGrid::new(j.n, j.length)?;
        let dec = |v: &Vec<[f64; 2]>| GridFunction::new(&grid, v.iter().map(|p| C64::new(p[0], p[1])).collect());
        let components = j.components.iter().map(|c| HomogeneousComponent::new(c.degree, dec(&c.cplus)?, dec(&c.cminus)?)).collect::<Result<Vec<_>>>()?;
        Self::new(&grid, j.top_order, components, j.exact)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ComponentJson {
    pub degree: f64,
    pub cplus: Vec<[f64; 2]>,
    pub cminus: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymbolJson {
    pub n: usize,
    pub length: f64,
    pub top_order: f64,
    pub truncation: usize,
    pub exact: bool,
    pub components: Vec<ComponentJson>,
}

/// Componentwise complex conjugation: the symbol of the adjoint operator.
pub fn adjoint_symbol(a: &PolyhomSymbol) -> PolyhomSymbol {
    PolyhomSymbol { grid: a.grid.clone(), top_order: a.top_order, components: a.components.iter().map(|c| c.map(|v| v.conj())).collect(), exact: a.exact }
}

/// x-derivatives `D_x^β c_j^±` of every stored component, computed once.
struct DerivTable {
    /// `[component][branch][β]`
    table: Vec<[Vec<Vec<C64>>; 2]>,
    degrees: Vec<f64>,
}

impl DerivTable {
    fn new(a: &PolyhomSymbol, max_beta: usize, depth: usize) -> Self {
        let grid = &a.grid;
        let n = grid.n();
        let mut table = Vec::new();
        let mut degrees = Vec::new();
        for j in 0..=depth {
            let c = match a.component(j) {
                Some(c) => c,
                None => break,
            };
            degrees.push(c.degree);
            let mut per_branch: [Vec<Vec<C64>>; 2] = [Vec::new(), Vec::new()];
            for (b, f) in [&c.cplus, &c.cminus].into_iter().enumerate() {
                if f.max_abs() == 0.0 {
                    per_branch[b] = vec![vec![ZERO; n]; max_beta + 1];
                    continue;
                }
                let mut hat = f.values().to_vec();
                grid.fft(&mut hat);
                // round-off in high modes is amplified by (κν)^β; drop it
                let top = hat.iter().map(|v| v.norm()).fold(0.0, f64::max);
                hat.iter_mut().filter(|v| v.norm() <= ROUNDOFF_CHOP * top).for_each(|v| *v = ZERO);
                for beta in 0..=max_beta {
                    let mut v: Vec<C64> = hat
                        .iter()
                        .enumerate()
                        .map(|(i, h)| {
                            if beta == 0 {
                                *h
                            } else if grid.mode(i).unsigned_abs() as usize > n / DEALIAS_DIVISOR {
                                ZERO
                            } else {
                                h * grid.wavenumber(i).powi(beta as i32)
                            }
                        })
                        .collect();
                    grid.ifft(&mut v);
                    if beta == 0 {
                        v = f.values().to_vec();
                    }
                    per_branch[b].push(v);
                }
            }
            table.push(per_branch);
        }
        Self { table, degrees }
    }

    fn len(&self) -> usize {
        self.table.len()
    }

    fn is_zero(&self, i: usize, branch: usize) -> bool {
        self.table[i][branch][0].iter().all(|v| *v == ZERO)
    }
}

/// Sign factor of the ξ-derivative on each branch.
fn xi_factor(s: f64, alpha: usize, branch: usize) -> f64 {
    let f = falling(s, alpha);
    if branch == 1 && alpha % 2 == 1 {
        -f
    } else {
        f
    }
}

/// Degree `m_a + m_b - j` part of `a # b`; `with_n0` controls the pointwise term.
fn moyal_level(da: &DerivTable, db: &DerivTable, j: usize, with_n0: bool, n: usize) -> [Vec<C64>; 2] {
    let mut out = [vec![ZERO; n], vec![ZERO; n]];
    for i in 0..=j.min(da.len().saturating_sub(1)) {
        for l in 0..=(j - i).min(db.len().saturating_sub(1)) {
            let order = j - i - l;
            if order == 0 && !with_n0 {
                continue;
            }
            for alpha in 0..=order {
                let beta = order - alpha;
                let coef = (0.5f64).powi(alpha as i32) * (-0.5f64).powi(beta as i32) / (factorial(alpha) * factorial(beta));
                for (br, o) in out.iter_mut().enumerate() {
                    if da.is_zero(i, br) || db.is_zero(l, br) {
                        continue;
                    }
                    let fa = xi_factor(da.degrees[i], alpha, br);
                    let fb = xi_factor(db.degrees[l], beta, br);
                    let w = coef * fa * fb;
                    if w == 0.0 {
                        continue;
                    }
                    let xa = &da.table[i][br][beta];
                    let xb = &db.table[l][br][alpha];
                    for ((o, p), q) in o.iter_mut().zip(xa).zip(xb) {
                        *o += p * q * w;
                    }
                }
            }
        }
    }
    out
}

fn depth_limit(a: &PolyhomSymbol, b: &PolyhomSymbol, n: usize) -> usize {
    n.min(a.depth()).min(b.depth())
}

/// Weyl composition `a # b` truncated after `n` terms.
///
/// The returned symbol's truncation is the depth actually computed, which is
/// lower than `n` when an input is itself truncated.
pub fn moyal_product(a: &PolyhomSymbol, b: &PolyhomSymbol, n: usize) -> Result<PolyhomSymbol> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let depth = depth_limit(a, b, n);
    let da = DerivTable::new(a, depth, depth);
    let db = DerivTable::new(b, depth, depth);
    let top = a.top_order + b.top_order;
    let grid = &a.grid;
    let components = (0..=depth)
        .map(|j| {
            let [p, m] = moyal_level(&da, &db, j, true, grid.n());
            HomogeneousComponent { degree: top - j as f64, cplus: gf(grid, p), cminus: gf(grid, m) }
        })
        .collect();
    Ok(PolyhomSymbol { grid: grid.clone(), top_order: top, components, exact: false })
}

/// `a # b - b # a` truncated after `n` terms, declared with top order `m_a + m_b - 1`.
pub fn moyal_commutator(a: &PolyhomSymbol, b: &PolyhomSymbol, n: usize) -> Result<PolyhomSymbol> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let depth = depth_limit(a, b, n + 1);
    let da = DerivTable::new(a, depth, depth);
    let db = DerivTable::new(b, depth, depth);
    let top = a.top_order + b.top_order - 1.0;
    let grid = &a.grid;
    let components = (1..=depth.max(1))
        .map(|j| {
            let [p1, m1] = moyal_level(&da, &db, j, false, grid.n());
            let [p2, m2] = moyal_level(&db, &da, j, false, grid.n());
            let sub = |x: Vec<C64>, y: Vec<C64>| x.into_iter().zip(y).map(|(u, v)| u - v).collect::<Vec<_>>();
            HomogeneousComponent { degree: top - (j - 1) as f64, cplus: gf(grid, sub(p1, p2)), cminus: gf(grid, sub(m1, m2)) }
        })
        .collect();
    Ok(PolyhomSymbol { grid: grid.clone(), top_order: top, components, exact: false })
}

/// Product truncated so that the lowest retained degree is `bottom`.
pub fn moyal_to_bottom(a: &PolyhomSymbol, b: &PolyhomSymbol, bottom: f64) -> Result<PolyhomSymbol> {
    let top = a.top_order + b.top_order;
    if bottom > top {
        return Ok(PolyhomSymbol::zero(&a.grid, bottom, 0));
    }
    moyal_product(a, b, (top - bottom).round() as usize)
}

fn gf(grid: &SpatialGrid, v: Vec<C64>) -> GridFunction {
    GridFunction::new(grid, v).expect("length matches grid")
}

fn check_elliptic(c: &HomogeneousComponent) -> Result<()> {
    let scale = c.max_abs().max(f64::MIN_POSITIVE);
    for (plus, name) in [(true, "k > 0"), (false, "k < 0")] {
        let min = c.branch(plus).values().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if !(min > 1e-12 * scale) {
            return Err(Error::NotElliptic { branch: name, min_abs: min });
        }
    }
    Ok(())
}

/// Degree-by-degree solve of `a # result = 1` to depth `n`.
pub fn asymptotic_inverse(a: &PolyhomSymbol, n: usize) -> Result<PolyhomSymbol> {
    let p = a.principal();
    check_elliptic(p)?;
    let grid = a.grid.clone();
    let np = grid.n();
    let n = n.min(a.depth());
    let da = DerivTable::new(a, n, n);
    let top = -a.top_order;
    let inv: [Vec<C64>; 2] = [p.cplus.values().iter().map(|v| v.inv()).collect(), p.cminus.values().iter().map(|v| v.inv()).collect()];
    let mut comps: Vec<HomogeneousComponent> = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let (plus, minus) = if j == 0 {
            (inv[0].clone(), inv[1].clone())
        } else {
            let mut partial = comps.clone();
            partial.push(HomogeneousComponent::zero(&grid, top - j as f64));
            let b = PolyhomSymbol { grid: grid.clone(), top_order: top, components: partial, exact: false };
            let db = DerivTable::new(&b, j, j);
            let [rp, rm] = moyal_level(&da, &db, j, true, np);
            (rp.iter().zip(&inv[0]).map(|(r, i)| -r * i).collect(), rm.iter().zip(&inv[1]).map(|(r, i)| -r * i).collect())
        };
        comps.push(HomogeneousComponent { degree: top - j as f64, cplus: gf(&grid, plus), cminus: gf(&grid, minus) });
    }
    Ok(PolyhomSymbol { grid, top_order: top, components: comps, exact: false })
}

/// Real square root `ε` with `ε # ε = a` through depth `n`.
pub fn asymptotic_sqrt(a: &PolyhomSymbol, n: usize) -> Result<PolyhomSymbol> {
    if a.top_order != 2.0 {
        return Err(Error::SymbolShape(format!("square root needs top order 2, found {}", a.top_order)));
    }
    let scale = a.max_abs().max(1.0);
    let imag = a.max_imag();
    if imag > 1e-12 * scale {
        return Err(Error::NotReal { max_imag: imag });
    }
    let p = a.principal();
    let min = p.cplus.values().iter().chain(p.cminus.values()).map(|v| v.re).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NotPositive { min });
    }
    sqrt_impl(a, n, true)
}

/// Square root of a symbol with complex coefficients (principal branch),
/// used off the real time axis where `a` is not real.
pub fn asymptotic_sqrt_continued(a: &PolyhomSymbol, n: usize) -> Result<PolyhomSymbol> {
    if a.top_order != 2.0 {
        return Err(Error::SymbolShape(format!("square root needs top order 2, found {}", a.top_order)));
    }
    check_elliptic(a.principal())?;
    sqrt_impl(a, n, false)
}

fn sqrt_impl(a: &PolyhomSymbol, n: usize, real: bool) -> Result<PolyhomSymbol> {
    let p = a.principal();
    let grid = a.grid.clone();
    let np = grid.n();
    let root_of = |v: &C64| if real { C64::new(v.re.sqrt(), 0.0) } else { v.sqrt() };
    let root: [Vec<C64>; 2] = [p.cplus.values().iter().map(root_of).collect(), p.cminus.values().iter().map(root_of).collect()];
    let mut comps: Vec<HomogeneousComponent> = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let (plus, minus) = if j == 0 {
            (root[0].clone(), root[1].clone())
        } else {
            let target = match a.component(j) {
                Some(c) => c,
                None => break,
            };
            let mut partial = comps.clone();
            partial.push(HomogeneousComponent::zero(&grid, 1.0 - j as f64));
            let e = PolyhomSymbol { grid: grid.clone(), top_order: 1.0, components: partial, exact: false };
            let de = DerivTable::new(&e, j, j);
            let [rp, rm] = moyal_level(&de, &de, j, true, np);
            let solve = |t: &GridFunction, r: &[C64], s: &[C64]| -> Vec<C64> {
                t.values()
                    .iter()
                    .zip(r)
                    .zip(s)
                    .map(|((t, r), s)| {
                        let v = (t - r) / (s * 2.0);
                        // the odd Moyal terms cancel in ε # ε; drop their round-off
                        if real {
                            C64::new(v.re, 0.0)
                        } else {
                            v
                        }
                    })
                    .collect()
            };
            (solve(&target.cplus, &rp, &root[0]), solve(&target.cminus, &rm, &root[1]))
        };
        comps.push(HomogeneousComponent { degree: 1.0 - j as f64, cplus: gf(&grid, plus), cminus: gf(&grid, minus) });
    }
    Ok(PolyhomSymbol { grid, top_order: 1.0, components: comps, exact: false })
}

/// Time-sampled symbols on uniform nodes.
#[derive(Clone, Debug)]
pub struct TimeSymbol {
    times: Vec<f64>,
    symbols: Vec<PolyhomSymbol>,
}

impl TimeSymbol {
    pub fn new(times: Vec<f64>, symbols: Vec<PolyhomSymbol>) -> Result<Self> {
        if times.len() != symbols.len() || times.is_empty() {
            return Err(Error::InvalidArgument("times and symbols must be non-empty and equal length".into()));
        }
        if times.len() > 1 {
            let h = times[1] - times[0];
            if !(h > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-12 * h.max(1.0)) {
                return Err(Error::InvalidArgument("time nodes must be uniform and increasing".into()));
            }
        }
        let (top, trunc) = (symbols[0].top_order(), symbols[0].truncation());
        if symbols.iter().any(|s| s.top_order() != top || s.truncation() != trunc) {
            return Err(Error::SymbolShape("node symbols must share top order and truncation".into()));
        }
        Ok(Self { times, symbols })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn symbols(&self) -> &[PolyhomSymbol] {
        &self.symbols
    }

    pub fn at_node(&self, i: usize) -> &PolyhomSymbol {
        &self.symbols[i]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn top_order(&self) -> f64 {
        self.symbols[0].top_order()
    }

    pub fn step(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn map(&self, f: impl Fn(&PolyhomSymbol) -> Result<PolyhomSymbol>) -> Result<Self> {
        let symbols = self.symbols.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), symbols)
    }

    pub fn zip(&self, other: &Self, f: impl Fn(&PolyhomSymbol, &PolyhomSymbol) -> Result<PolyhomSymbol>) -> Result<Self> {
        if self.times != other.times {
            return Err(Error::InvalidArgument("time nodes differ".into()));
        }
        let symbols = self.symbols.iter().zip(&other.symbols).map(|(a, b)| f(a, b)).collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), symbols)
    }

    /// Componentwise 4th-order finite-difference time derivative.
    pub fn time_derivative(&self) -> Result<Self> {
        let m = self.times.len();
        if m < 5 {
            return Err(Error::InvalidArgument("time derivative needs at least 5 nodes".into()));
        }
        let h = self.step();
        let symbols = (0..m)
            .map(|i| {
                let (center, stencil): (usize, [(usize, f64); 5]) = if i < 2 {
                    let w = if i == 0 { [-25.0, 48.0, -36.0, 16.0, -3.0] } else { [-3.0, -10.0, 18.0, -6.0, 1.0] };
                    (i, [(0, w[0]), (1, w[1]), (2, w[2]), (3, w[3]), (4, w[4])])
                } else if i + 2 >= m {
                    let w = if i == m - 1 { [3.0, -16.0, 36.0, -48.0, 25.0] } else { [-1.0, 6.0, -18.0, 10.0, 3.0] };
                    (i, [(m - 5, w[0]), (m - 4, w[1]), (m - 3, w[2]), (m - 2, w[3]), (m - 1, w[4])])
                } else {
                    (i, [(i - 2, 1.0), (i - 1, -8.0), (i, 0.0), (i + 1, 8.0), (i + 2, -1.0)])
                };
                self.fd_combination(center, &stencil, 1.0 / (12.0 * h))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), symbols)
    }

    /// `scale · Σ w_i (s_i - s_center)`; differences keep static data exactly zero.
    fn fd_combination(&self, center: usize, stencil: &[(usize, f64)], scale: f64) -> Result<PolyhomSymbol> {
        let base = &self.symbols[center];
        let grid = base.grid().clone();
        let components = (0..base.components.len())
            .map(|j| {
                let mut p = vec![ZERO; grid.n()];
                let mut q = vec![ZERO; grid.n()];
                let c0 = &base.components[j];
                for &(idx, w) in stencil {
                    if w == 0.0 || idx == center {
                        continue;
                    }
                    let c = &self.symbols[idx].components[j];
                    for (x, (a, b)) in p.iter_mut().zip(c.cplus.values().iter().zip(c0.cplus.values())) {
                        *x += (a - b) * w;
                    }
                    for (x, (a, b)) in q.iter_mut().zip(c.cminus.values().iter().zip(c0.cminus.values())) {
                        *x += (a - b) * w;
                    }
                }
                p.iter_mut().chain(q.iter_mut()).for_each(|v| *v *= scale);
                HomogeneousComponent { degree: c0.degree, cplus: gf(&grid, p), cminus: gf(&grid, q) }
            })
            .collect();
        Ok(PolyhomSymbol { grid, top_order: base.top_order, components, exact: base.exact })
    }

    /// Symbol at arbitrary `t` by 6-point Lagrange interpolation in time.
    pub fn at(&self, t: f64) -> PolyhomSymbol {
        let m = self.times.len();
        let h = self.step();
        if m == 1 {
            return self.symbols[0].clone();
        }
        let pos = (t - self.times[0]) / h;
        let near = pos.round();
        if (pos - near).abs() < 1e-12 && near >= 0.0 && (near as usize) < m {
            return self.symbols[near as usize].clone();
        }
        let width = 6.min(m);
        let start = ((pos.floor() as i64) - (width as i64 / 2 - 1)).clamp(0, (m - width) as i64) as usize;
        let idx: Vec<usize> = (start..start + width).collect();
        let weights: Vec<f64> =
            idx.iter().map(|&i| idx.iter().filter(|&&j| j != i).map(|&j| (t - self.times[j]) / (self.times[i] - self.times[j])).product()).collect();
        let base = &self.symbols[idx[0]];
        let grid = base.grid().clone();
        let components = (0..base.components.len())
            .map(|c| {
                let mut p = vec![ZERO; grid.n()];
                let mut q = vec![ZERO; grid.n()];
                for (&i, &w) in idx.iter().zip(&weights) {
                    let comp = &self.symbols[i].components[c];
                    for (x, a) in p.iter_mut().zip(comp.cplus.values()) {
                        *x += a * w;
                    }
                    for (x, a) in q.iter_mut().zip(comp.cminus.values()) {
                        *x += a * w;
                    }
                }
                HomogeneousComponent { degree: base.components[c].degree, cplus: gf(&grid, p), cminus: gf(&grid, q) }
            })
            .collect();
        PolyhomSymbol { grid, top_order: base.top_order, components, exact: base.exact }
    }
}

/// A family of symbols indexed by time, closed under pointwise combination.
pub trait SymbolFamily: Sized {
    fn top_order(&self) -> f64;
    fn symbols(&self) -> &[PolyhomSymbol];
    fn zip(&self, other: &Self, f: impl Fn(&PolyhomSymbol, &PolyhomSymbol) -> Result<PolyhomSymbol>) -> Result<Self>;
}

impl SymbolFamily for TimeSymbol {
    fn top_order(&self) -> f64 {
        TimeSymbol::top_order(self)
    }
    fn symbols(&self) -> &[PolyhomSymbol] {
        TimeSymbol::symbols(self)
    }
    fn zip(&self, other: &Self, f: impl Fn(&PolyhomSymbol, &PolyhomSymbol) -> Result<PolyhomSymbol>) -> Result<Self> {
        TimeSymbol::zip(self, other, f)
    }
}

/// Outcome of [`fixed_point_solve`].
#[derive(Clone, Debug)]
pub struct FixedPoint<S = TimeSymbol> {
    pub solution: S,
    pub iterations: usize,
}

/// Iterates `b ← a + F(b)` at most `n` times for a map gaining one degree.
pub fn fixed_point_solve<S: SymbolFamily>(a: &S, f: &dyn Fn(&S) -> Result<S>, n: usize) -> Result<FixedPoint<S>> {
    let probe = f(a)?;
    if !(probe.top_order() < a.top_order()) {
        return Err(Error::NoDegreeGain { input: a.top_order(), output: probe.top_order() });
    }
    let mut b = a.zip(&probe, |x, y| x.add(y))?;
    let mut iterations = 1;
    while iterations < n {
        let next = a.zip(&f(&b)?, |x, y| x.add(y))?;
        let same = next.symbols().iter().zip(b.symbols()).all(|(x, y)| x.sub(y).map(|d| d.max_abs() == 0.0).unwrap_or(false));
        b = next;
        iterations += 1;
        if same {
            break;
        }
    }
    Ok(FixedPoint { solution: b, iterations })
}

/// Symbols sampled on circles `t_c + ρ e^{iθ_m}` around real centres.
///
/// The samples determine the Taylor series at each centre, so time
/// derivatives and values between centres come without finite differences.
#[derive(Clone, Debug)]
pub struct ContourSymbol {
    centers: Vec<f64>,
    radius: f64,
    points: usize,
    /// `[centre · points + m]`
    values: Vec<PolyhomSymbol>,
    /// Scaled Taylor coefficients `[centre][j]` of `Σ_j a_j ((t - t_c)/ρ)^j`.
    taylor: Vec<Vec<PolyhomSymbol>>,
}

impl ContourSymbol {
    /// Complex sample times in storage order.
    pub fn sample_times(centers: &[f64], radius: f64, points: usize) -> Vec<C64> {
        centers.iter().flat_map(|&c| (0..points).map(move |m| C64::new(c, 0.0) + C64::from_polar(radius, 2.0 * PI * m as f64 / points as f64))).collect()
    }

    pub fn new(centers: Vec<f64>, radius: f64, points: usize, values: Vec<PolyhomSymbol>) -> Result<Self> {
        if centers.is_empty() || points < 4 || !points.is_multiple_of(2) || !(radius > 0.0) {
            return Err(Error::InvalidArgument("contour needs centres, an even point count ≥ 4 and a positive radius".into()));
        }
        if values.len() != centers.len() * points {
            return Err(Error::SizeMismatch { expected: centers.len() * points, found: values.len() });
        }
        let (top, trunc) = (values[0].top_order(), values[0].truncation());
        if values.iter().any(|s| s.top_order() != top || s.truncation() != trunc || s.grid() != values[0].grid()) {
            return Err(Error::SymbolShape("contour samples must share grid, top order and truncation".into()));
        }
        let taylor = centers.iter().enumerate().map(|(c, _)| taylor_coefficients(&values[c * points..(c + 1) * points])).collect();
        Ok(Self { centers, radius, points, values, taylor })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn top_order(&self) -> f64 {
        self.values[0].top_order()
    }

    pub fn samples(&self) -> &[PolyhomSymbol] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(&PolyhomSymbol) -> Result<PolyhomSymbol>) -> Result<Self> {
        let values = self.values.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(self.centers.clone(), self.radius, self.points, values)
    }

    fn same_contour(&self, other: &Self) -> bool {
        self.centers == other.centers && self.radius == other.radius && self.points == other.points
    }

    /// Exact time derivative of the sampled Taylor series. Modes above
    /// `points/2` are dropped first so that round-off is not amplified.
    pub fn time_derivative(&self) -> Result<Self> {
        let half = self.points / 2;
        let values = (0..self.centers.len())
            .flat_map(|c| {
                let coeffs = &self.taylor[c];
                (0..self.points).map(move |m| {
                    let w = C64::from_polar(1.0, 2.0 * PI * m as f64 / self.points as f64);
                    // d/dt Σ a_j w^j = Σ j a_j w^{j-1} / ρ
                    let terms: Vec<(C64, &PolyhomSymbol)> = (1..half).map(|j| (w.powi(j as i32 - 1) * (j as f64 / self.radius), &coeffs[j])).collect();
                    linear_combination(&coeffs[0], &terms)
                })
            })
            .collect::<Vec<_>>();
        Self::new(self.centers.clone(), self.radius, self.points, values)
    }

    fn nearest(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, c) in self.centers.iter().enumerate() {
            if (c - t).abs() < (self.centers[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// Value at real `t` from the Taylor series of the nearest centre.
    pub fn at(&self, t: f64) -> PolyhomSymbol {
        let c = self.nearest(t);
        let w = (t - self.centers[c]) / self.radius;
        let coeffs = &self.taylor[c];
        let terms: Vec<(C64, &PolyhomSymbol)> = (0..self.points / 2).map(|j| (C64::new(w.powi(j as i32), 0.0), &coeffs[j])).collect();
        linear_combination(&coeffs[0], &terms)
    }

    /// `∂_t` at real `t`.
    pub fn dt_at(&self, t: f64) -> PolyhomSymbol {
        let c = self.nearest(t);
        let w = (t - self.centers[c]) / self.radius;
        let coeffs = &self.taylor[c];
        let terms: Vec<(C64, &PolyhomSymbol)> =
            (1..self.points / 2).map(|j| (C64::new(j as f64 * w.powi(j as i32 - 1) / self.radius, 0.0), &coeffs[j])).collect();
        linear_combination(&coeffs[0], &terms)
    }
}

impl SymbolFamily for ContourSymbol {
    fn top_order(&self) -> f64 {
        ContourSymbol::top_order(self)
    }
    fn symbols(&self) -> &[PolyhomSymbol] {
        &self.values
    }
    fn zip(&self, other: &Self, f: impl Fn(&PolyhomSymbol, &PolyhomSymbol) -> Result<PolyhomSymbol>) -> Result<Self> {
        if !self.same_contour(other) {
            return Err(Error::InvalidArgument("contours differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect::<Result<Vec<_>>>()?;
        Self::new(self.centers.clone(), self.radius, self.points, values)
    }
}

/// `Σ w_i s_i` over symbols shaped like `shape`.
fn linear_combination(shape: &PolyhomSymbol, terms: &[(C64, &PolyhomSymbol)]) -> PolyhomSymbol {
    let grid = shape.grid().clone();
    let n = grid.n();
    let components = (0..shape.components.len())
        .map(|c| {
            let mut p = vec![ZERO; n];
            let mut q = vec![ZERO; n];
            for (w, s) in terms {
                let comp = &s.components[c];
                for (x, a) in p.iter_mut().zip(comp.cplus.values()) {
                    *x += a * w;
                }
                for (x, a) in q.iter_mut().zip(comp.cminus.values()) {
                    *x += a * w;
                }
            }
            HomogeneousComponent { degree: shape.components[c].degree, cplus: gf(&grid, p), cminus: gf(&grid, q) }
        })
        .collect();
    PolyhomSymbol { grid, top_order: shape.top_order, components, exact: shape.exact }
}

/// Taylor coefficients `a_j = (1/M) Σ_m f(z_m) e^{-ijθ_m}` for `j < M`.
fn taylor_coefficients(samples: &[PolyhomSymbol]) -> Vec<PolyhomSymbol> {
    let m = samples.len();
    let fft = rustfft::FftPlanner::<f64>::new().plan_fft_forward(m);
    let shape = &samples[0];
    let grid = shape.grid().clone();
    let n = grid.n();
    let ncomp = shape.components.len();
    // out[j][c][branch][x]
    let mut out = vec![vec![[vec![ZERO; n], vec![ZERO; n]]; ncomp]; m];
    let mut buf = vec![ZERO; m];
    for c in 0..ncomp {
        for br in 0..2 {
            for x in 0..n {
                for (k, s) in samples.iter().enumerate() {
                    let comp = &s.components[c];
                    buf[k] = if br == 0 { comp.cplus.values()[x] } else { comp.cminus.values()[x] };
                }
                fft.process(&mut buf);
                for (j, v) in buf.iter().enumerate() {
                    out[j][c][br][x] = v / m as f64;
                }
            }
        }
    }
    out.into_iter()
        .map(|comps| {
            let components = comps
                .into_iter()
                .enumerate()
                .map(|(c, [p, q])| HomogeneousComponent { degree: shape.components[c].degree, cplus: gf(&grid, p), cminus: gf(&grid, q) })
                .collect();
            PolyhomSymbol { grid: grid.clone(), top_order: shape.top_order, components, exact: shape.exact }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::periodic_2pi(32).unwrap()
    }

    fn real(grid: &SpatialGrid, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_real_fn(grid, f)
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(0.5), 0.0);
        assert_eq!(cutoff(1.0), 0.0);
        assert_eq!(cutoff(2.0), 1.0);
        assert!((cutoff(1.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eval_examples() {
        let g = grid();
        let one = GridFunction::constant(&g, C64::new(1.0, 0.0));
        let a = PolyhomSymbol::homogeneous(&one, 1.0);
        assert!((a.eval_node(0, 4.0) - C64::new(4.0, 0.0)).norm() < 1e-14);
        assert!((a.eval_node(0, -4.0) - C64::new(4.0, 0.0)).norm() < 1e-14);
        let b = PolyhomSymbol::homogeneous(&one.scale(C64::new(2.0, 0.0)), -1.0);
        assert!((b.eval_node(3, 8.0) - C64::new(0.25, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn polynomial_classification() {
        let g = grid();
        assert!(PolyhomSymbol::wavenumber(&g).principal().is_polynomial());
        let one = GridFunction::constant(&g, C64::new(1.0, 0.0));
        assert!(!PolyhomSymbol::homogeneous(&one, 1.0).principal().is_polynomial());
        assert!(PolyhomSymbol::homogeneous(&one, 2.0).principal().is_polynomial());
    }

    #[test]
    fn product_of_functions_is_pointwise() {
        let g = grid();
        let f = PolyhomSymbol::from_function(&real(&g, |x| x.cos()));
        let h = PolyhomSymbol::from_function(&real(&g, |x| 1.0 + x.sin()));
        let p = moyal_product(&f, &h, 4).unwrap();
        for (j, x) in g.nodes().iter().enumerate() {
            let v = p.components()[0].cplus.values()[j];
            assert!((v.re - x.cos() * (1.0 + x.sin())).abs() < 1e-13);
        }
        assert!(p.components()[1..].iter().all(|c| c.max_abs() < 1e-13));
    }

    #[test]
    fn wavenumber_squared() {
        let g = grid();
        let k = PolyhomSymbol::wavenumber(&g);
        let k2 = moyal_product(&k, &k, 3).unwrap();
        assert!(k2.principal().is_polynomial());
        assert!((k2.eval_node(0, -3.0) - C64::new(9.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inverse_of_abs_k() {
        let g = grid();
        let one = GridFunction::constant(&g, C64::new(1.0, 0.0));
        let a = PolyhomSymbol::homogeneous(&one, 1.0);
        let inv = asymptotic_inverse(&a, 4).unwrap();
        assert_eq!(inv.top_order(), -1.0);
        assert!((inv.principal().cplus.values()[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(inv.components()[1..].iter().all(|c| c.max_abs() < 1e-14));
    }

    #[test]
    fn inverse_rejects_degenerate_branch() {
        let g = grid();
        let c = HomogeneousComponent::new(1.0, GridFunction::constant(&g, C64::new(1.0, 0.0)), GridFunction::zeros(&g)).unwrap();
        let a = PolyhomSymbol::new(&g, 1.0, vec![c], true).unwrap();
        match asymptotic_inverse(&a, 2) {
            Err(Error::NotElliptic { branch, .. }) => assert_eq!(branch, "k < 0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sqrt_binomial_series() {
        let g = grid();
        let m2 = 0.7;
        let one = GridFunction::constant(&g, C64::new(1.0, 0.0));
        let comps = vec![
            HomogeneousComponent::even(2.0, one.clone()),
            HomogeneousComponent::zero(&g, 1.0),
            HomogeneousComponent::even(0.0, one.scale(C64::new(m2, 0.0))),
        ];
        let a = PolyhomSymbol::new(&g, 2.0, comps, true).unwrap();
        let e = asymptotic_sqrt(&a, 4).unwrap();
        let c = |j: usize| e.components()[j].cplus.values()[5].re;
        assert!((c(0) - 1.0).abs() < 1e-14);
        assert!(c(1).abs() < 1e-14);
        assert!((c(2) - m2 / 2.0).abs() < 1e-14);
        assert!(c(3).abs() < 1e-14);
        assert!((c(4) + m2 * m2 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_of_k_squared_is_abs_k() {
        let g = grid();
        let k = PolyhomSymbol::wavenumber(&g);
        let a = moyal_product(&k, &k, 2).unwrap();
        let e = asymptotic_sqrt(&a, 3).unwrap();
        assert!((e.eval_node(0, -5.0) - C64::new(5.0, 0.0)).norm() < 1e-12);
        assert!(e.components()[1..].iter().all(|c| c.max_abs() < 1e-14));
    }

    #[test]
    fn sqrt_rejects_negative_principal() {
        let g = grid();
        let a = PolyhomSymbol::homogeneous(&real(&g, |x| x.cos()), 2.0);
        assert!(matches!(asymptotic_sqrt(&a, 2), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn commutator_of_functions_vanishes() {
        let g = grid();
        let f = PolyhomSymbol::from_function(&real(&g, |x| x.cos()));
        let h = PolyhomSymbol::from_function(&real(&g, |x| x.sin()));
        let c = moyal_commutator(&f, &h, 3).unwrap();
        assert_eq!(c.top_order(), -1.0);
        assert!(c.max_abs() < 1e-14);
    }

    #[test]
    fn commutator_with_k_is_derivative() {
        // [k, f] = D_x f = -i f'
        let g = grid();
        let f = PolyhomSymbol::from_function(&real(&g, |x| x.sin()));
        let c = moyal_commutator(&PolyhomSymbol::wavenumber(&g), &f, 2).unwrap();
        assert_eq!(c.top_order(), 0.0);
        for (j, x) in g.nodes().iter().enumerate() {
            let v = c.components()[0].cplus.values()[j];
            assert!((v - C64::new(0.0, -x.cos())).norm() < 1e-12);
        }
    }

    #[test]
    fn json_roundtrip() {
        let g = grid();
        let a = PolyhomSymbol::homogeneous(&real(&g, |x| 1.0 + 0.2 * x.cos()), 1.0);
        let j = a.to_json();
        let b = PolyhomSymbol::from_json(&serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap()).unwrap();
        assert_eq!(b.to_json(), j);
    }

    #[test]
    fn time_derivative_of_linear_profile() {
        let g = grid();
        let base = real(&g, |x| 1.0 + 0.1 * x.sin());
        let times: Vec<f64> = (0..9).map(|i| i as f64 * 0.125).collect();
        let syms = times.iter().map(|t| PolyhomSymbol::homogeneous(&base.scale(C64::new(1.0 + t * t, 0.0)), 1.0)).collect();
        let ts = TimeSymbol::new(times.clone(), syms).unwrap();
        let d = ts.time_derivative().unwrap();
        for (i, t) in times.iter().enumerate() {
            let v = d.at_node(i).principal().cplus.values()[0].re;
            assert!((v - 2.0 * t * base.values()[0].re).abs() < 1e-12, "node {i}");
        }
        let mid = ts.at(0.3);
        assert!((mid.principal().cplus.values()[0].re - 1.09 * base.values()[0].re).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_trivial_maps() {
        let g = grid();
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
        let a = TimeSymbol::new(times.clone(), vec![PolyhomSymbol::one(&g).truncate(2); 5]).unwrap();
        let zero = |x: &TimeSymbol| x.map(|s| Ok(PolyhomSymbol::zero(s.grid(), -1.0, 1)));
        let r = fixed_point_solve(&a, &zero, 6).unwrap();
        assert!(r.iterations <= 2);
        let c = PolyhomSymbol::homogeneous(&real(&g, |x| x.cos()), -1.0);
        let constant = |x: &TimeSymbol| x.map(|_| Ok(c.clone()));
        let r = fixed_point_solve(&a, &constant, 6).unwrap();
        let expect = PolyhomSymbol::one(&g).add(&c).unwrap();
        assert!(r.solution.at_node(2).sub(&expect).unwrap().max_abs() < 1e-15);
        let bad = |x: &TimeSymbol| x.map(|s| Ok(s.clone()));
        assert!(matches!(fixed_point_solve(&a, &bad, 3), Err(Error::NoDegreeGain { .. })));
    }
}
