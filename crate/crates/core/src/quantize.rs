//! Weyl quantization of symbols on the torus.
//!
//! Matrix elements are assembled in the Fourier basis: for modes `p, q` the
//! element is `Σ_j ĉ_j(ν) h_j(κ(p+q)/2)` with `ν ≡ p - q` folded into
//! `[-n/2, n/2]`. The nodal matrix is `F^† M F`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridOperator, SpatialGrid};
use crate::linalg::{self, CMat};
use crate::symbol::{HomogeneousComponent, PolyhomSymbol};

/// Per-component lookup: series coefficients on both branches and the
/// `k`-weight at every half-integer midpoint `ξ2 = p + q ∈ [-n, n]`.
struct ComponentTable {
    plus: Vec<C64>,
    minus: Vec<C64>,
    weight: Vec<f64>,
}

fn table(grid: &SpatialGrid, c: &HomogeneousComponent) -> ComponentTable {
    let n = grid.n() as i64;
    let poly = c.is_polynomial();
    let kappa = grid.kappa();
    let weight = (-n..=n).map(|x2| c.weight(kappa * x2 as f64 / 2.0, poly)).collect();
    ComponentTable { plus: grid.series_coefficients(c.cplus.values()), minus: grid.series_coefficients(c.cminus.values()), weight }
}

/// Fourier-basis matrix of `Op^w(a)` (FFT ordering on both indices).
pub fn quantize_fourier(a: &PolyhomSymbol) -> CMat {
    let grid = a.grid();
    let n = grid.n();
    let tables: Vec<ComponentTable> = a.components().iter().filter(|c| !c.is_zero()).map(|c| table(grid, c)).collect();
    let modes: Vec<i64> = (0..n).map(|i| grid.mode(i)).collect();
    let ni = n as i64;
    faer::Mat::from_fn(n, n, |ip, iq| {
        let (p, q) = (modes[ip], modes[iq]);
        let nu_idx = (p - q).rem_euclid(ni) as usize;
        let x2 = p + q;
        let w_idx = (x2 + ni) as usize;
        let plus = x2 >= 0;
        let mut s = C64::new(0.0, 0.0);
        for t in &tables {
            let w = t.weight[w_idx];
            if w == 0.0 {
                continue;
            }
            if x2 == -ni {
                // Nyquist self-coupling: the mode is a cosine, average both branches
                s += (t.plus[nu_idx] + t.minus[nu_idx]) * (0.5 * w);
            } else {
                s += if plus { t.plus[nu_idx] } else { t.minus[nu_idx] } * w;
            }
        }
        s
    })
}

/// Weyl quantization in the nodal basis.
pub fn quantize(a: &PolyhomSymbol) -> GridOperator {
    GridOperator::from_fourier(a.grid(), &quantize_fourier(a))
}

/// Exact Weyl symbol of `-∂ a11 ∂ + b1 ∂ - ∂ conj(b1) + m`.
///
/// `D c D` has symbol `c k² + c''/4`; `b ∂ - ∂ b̄` has symbol
/// `-2k Im b - (Re b)'`.
pub fn weyl_symbol_of_diff_op(a11: &GridFunction, b1: &GridFunction, m: &GridFunction) -> Result<PolyhomSymbol> {
    let grid = a11.grid();
    if b1.grid() != grid || m.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let scale = a11.max_abs().max(1.0);
    if a11.max_imag() > 1e-12 * scale {
        return Err(Error::NotReal { max_imag: a11.max_imag() });
    }
    let min = a11.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NotPositive { min });
    }
    if m.max_imag() > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::NotReal { max_imag: m.max_imag() });
    }
    let real = |f: &GridFunction| f.map(|v| C64::new(v.re, 0.0));
    let s = weyl_symbol_continued(&real(a11), b1, &b1.conj(), &real(m))?;
    // the zero-order part is real on the real axis
    let comps = s.components().iter().map(|c| if c.degree == 0.0 { HomogeneousComponent::even(0.0, real(&c.cplus)) } else { c.clone() }).collect();
    PolyhomSymbol::new(grid, 2.0, comps, true)
}

/// The same symbol for complex-time coefficients, with `b1_conj` standing in
/// for `conj(b1)`. No reality or positivity checks.
pub fn weyl_symbol_continued(a11: &GridFunction, b1: &GridFunction, b1_conj: &GridFunction, m: &GridFunction) -> Result<PolyhomSymbol> {
    let grid = a11.grid();
    if b1.grid() != grid || b1_conj.grid() != grid || m.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let im_b = b1.sub(b1_conj)?.scale(C64::new(0.0, -0.5));
    let re_b = b1.add(b1_conj)?.scale(C64::new(0.5, 0.0));
    let zero_order = a11.spectral_derivative(2)?.scale(C64::new(0.25, 0.0)).sub(&re_b.spectral_derivative(1)?)?.add(m)?;
    let comps = vec![
        HomogeneousComponent::even(2.0, a11.clone()),
        HomogeneousComponent::new(1.0, im_b.scale(C64::new(-2.0, 0.0)), im_b.scale(C64::new(2.0, 0.0)))?,
        HomogeneousComponent::even(0.0, zero_order),
    ];
    PolyhomSymbol::new(grid, 2.0, comps, true)
}

/// Directly assembled `D a11 D + b1 (iD) - iD b̄1 + m` from spectral derivatives.
pub fn diff_op_matrix(a11: &GridFunction, b1: &GridFunction, m: &GridFunction) -> Result<GridOperator> {
    let grid = a11.grid();
    let d = GridOperator::new(grid, crate::grid::d_x_matrix(grid))?;
    let i = C64::new(0.0, 1.0);
    let dad = d.compose(&GridOperator::multiplication(a11))?.compose(&d)?;
    let bd = GridOperator::multiplication(b1).compose(&d)?.scale(i);
    let db = d.compose(&GridOperator::multiplication(&b1.conj()))?.scale(i);
    dad.add(&bd)?.sub(&db)?.add(&GridOperator::multiplication(m))
}

/// `(A + A^†)/2` after checking the asymmetry is below `tol · max(1, ‖A‖_max)`.
pub fn hermitize(a: &GridOperator, tol: f64) -> Result<GridOperator> {
    let asym = linalg::asymmetry(a.mat());
    let bound = tol * a.max_abs().max(1.0);
    if asym > bound {
        return Err(Error::NotHermitian { asym, tol: bound });
    }
    GridOperator::new(a.grid(), linalg::hermitian_part(a.mat()))
}
