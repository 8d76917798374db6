//! Verification suites shared by the command line and the acceptance tests.
//! Each suite returns report rows; a failed computation is an `Err`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::geometry::{
    egorov_check, factorization_check, flow_jacobian_det, sample_phase_points, EgorovOptions, ExplicitCoefficients, FlowOptions, FlowSign, ModelCoefficients,
    ModelSource,
};
use crate::grid::{fit_line, smoothing_decay_diagnostic_with, DecayOptions, GridFunction, GridOperator, SpatialGrid};
use crate::linalg::{self, CMat};
use crate::oracle::{frequency_sign_fraction, solve_cauchy_direct, FrequencySign, OracleOptions};
use crate::parametrix::{b_remainder, charge_pairing, epsilon_at, epsilon_remainder, model_symbol, CauchyData, ParametrixBundle};
use crate::quantize::{diff_op_matrix, quantize};
use crate::report::{Relation, Row};
use crate::states::{
    canonical_state, check_musc_proxy, check_positivity, check_purity, covariance_check, glue_states, group_act, hadamard_family, intertwiner_check,
    partition_defect, partition_windows, pure_state_from, q_reconstruction, random_group_element, random_smoothing, random_spec, static_kms, static_vacuum,
    u_of_g, Frame, TwoPointFunction,
};
use crate::symbol::{asymptotic_inverse, moyal_product, moyal_to_bottom, PolyhomSymbol};

/// Anchor strings carried by report rows.
pub mod anchor {
    pub const T_INVERSE: &str = "Lemma 4.1 (2)";
    pub const T_CHARGE: &str = "Lemma 4.1 (4)";
    pub const PURITY: &str = "Prop. istu (3)";
    pub const COVARIANCE: &str = "Thm. p4.7";
    pub const GROUP: &str = "Prop. defu";
    pub const D_SUM: &str = "eq. etoto.3";
    pub const EPSILON: &str = "Lemma 2.2";
    pub const B_EQUATION: &str = "eq. (etoto.1)";
    pub const INVERSE: &str = "§4.4";
    pub const EVOLUTION: &str = "Thm. 3.1 (1)";
    pub const ORACLE: &str = "Thm. 3.1 (2)";
    pub const R_SPECTRUM: &str = "Thm. 3.1 (ii)";
    pub const STATIC: &str = "§4.6";
    pub const CHARGE_SIGN: &str = "Thm. posit (3)";
    pub const ORTHOGONAL: &str = "Thm. posit (4)";
    pub const WAVEFRONT: &str = "Cor. 3.1b";
    pub const POSITIVITY: &str = "Prop. 4.4";
    pub const FAMILY: &str = "Thm. 4.3";
    pub const MUSC: &str = "Thm. 4.2";
    pub const CANONICAL_FORM: &str = "Thm. thm:canonicform";
    pub const INTERTWINER: &str = "Prop. prop:transinfty";
    pub const PRESERVATION: &str = "Cor. p4.5";
    pub const GLUING: &str = "§8.2";
    pub const FLOW: &str = "Lemma 2.3";
    pub const EGOROV: &str = "Prop. 1.2";
    pub const FACTORIZATION: &str = "Lemma 2.1";

    pub const ALL: &[&str] = &[
        T_INVERSE,
        T_CHARGE,
        PURITY,
        COVARIANCE,
        GROUP,
        D_SUM,
        EPSILON,
        B_EQUATION,
        INVERSE,
        EVOLUTION,
        ORACLE,
        R_SPECTRUM,
        STATIC,
        CHARGE_SIGN,
        ORTHOGONAL,
        WAVEFRONT,
        POSITIVITY,
        FAMILY,
        MUSC,
        CANONICAL_FORM,
        INTERTWINER,
        PRESERVATION,
        GLUING,
        FLOW,
        EGOROV,
        FACTORIZATION,
    ];
}

use anchor as A;
use Relation::{Ge, Gt, Le, Lt};

// independent streams per suite
const SALT_GROUP: u64 = 0x6772_6f75;
const SALT_SPLIT: u64 = 0x7370_6c69;
const SALT_ORACLE: u64 = 0x6f72_6163;
const SALT_STATE: u64 = 0x7374_6174;
const SALT_FLOW: u64 = 0x666c_6f77;

fn rng(cfg: &RunConfig, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed ^ salt)
}

/// Random complex data on the modes `±(K..2K)`.
pub fn band_limited(grid: &SpatialGrid, k: usize, rng: &mut impl Rng) -> GridFunction {
    let mut hat = vec![C64::new(0.0, 0.0); grid.n()];
    for m in k..2 * k {
        for s in [1i64, -1] {
            hat[grid.index_of_mode(s * m as i64)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    grid.ifft(&mut hat);
    GridFunction::new(grid, hat).expect("length matches grid")
}

/// Band-`K` Cauchy data with `f₁` scaled by `K`, so both components carry
/// comparable energy.
pub fn band_data(grid: &SpatialGrid, k: usize, rng: &mut impl Rng) -> CauchyData {
    let f0 = band_limited(grid, k, rng);
    let f1 = band_limited(grid, k, rng).scale(C64::new(k as f64, 0.0));
    CauchyData { f0, f1 }
}

fn slope(op: &GridOperator, bands: &[usize], floor: f64) -> Result<f64> {
    Ok(smoothing_decay_diagnostic_with(op, bands, DecayOptions { guard: None, floor })?.slope)
}

fn rel_identity_defect(m: &CMat, want: &CMat) -> f64 {
    linalg::max_abs_diff(m, want) / linalg::max_abs(want).max(1.0)
}

fn slope_threshold(cfg: &RunConfig, truncation: usize) -> f64 {
    -(truncation as f64 - 1.0) + cfg.tolerances.slope_slack
}

/// Smallest block eigenvalue of `λ` and `λ - q`, relative to `‖λ‖`.
fn positivity_margin(lam: &TwoPointFunction) -> Result<(f64, f64)> {
    let p = check_positivity(lam)?;
    let norm = p.tol / (1e-10 * lam.grid().n() as f64);
    Ok((p.eigmin_plus / norm, p.eigmin_minus / norm))
}

/// Exact block identities of the transform, states, group and `d±`.
pub fn exact_identities(cfg: &RunConfig, bundle: &ParametrixBundle) -> Result<Vec<Row>> {
    let tol = cfg.tolerances.identity;
    let grid = bundle.grid();
    let n = grid.n();
    let (t, t_inv) = (bundle.t(), bundle.t_inv());
    let q = linalg::charge(n);
    let mut rows = vec![
        Row::new("t_times_t_inverse", A::T_INVERSE, rel_identity_defect(&(t * t_inv), &linalg::identity(2 * n)), Le, tol),
        Row::new("t_inverse_charge_diagonal", A::T_CHARGE, rel_identity_defect(&(t_inv.adjoint() * &q * t_inv), &linalg::charge_diag(n)), Le, tol),
    ];
    let lam = canonical_state(bundle.r())?;
    rows.push(Row::new("canonical_state_purity", A::PURITY, check_purity(&lam)? / lam.scale(), Le, tol));
    let d_sum = bundle.d_plus().add(bundle.d_minus())?;
    rows.push(Row::new("d_plus_plus_d_minus", A::D_SUM, rel_identity_defect(d_sum.mat(), &linalg::identity(n)), Le, tol));

    let check = cfg.smoothing_check();
    let mut rng = rng(cfg, SALT_GROUP);
    let elems: Vec<_> = (0..cfg.group.count).map(|_| random_group_element(grid, cfg.group.scale, &mut rng)).collect();
    let (mut cov, mut charge, mut invalid, mut law) = (0.0f64, 0.0f64, 0usize, 0.0f64);
    for (i, ge) in elems.iter().enumerate() {
        if !ge.validate(grid, &check)?.pass {
            invalid += 1;
        }
        let c = covariance_check(ge, bundle.r())?;
        cov = cov.max(c.residual);
        charge = charge.max(c.charge);
        if i > 0 {
            let first = &elems[i - 1];
            let lhs = group_act(&ge.compose(first), bundle.r())?;
            let rhs = group_act(ge, &group_act(first, bundle.r())?)?;
            law = law.max(linalg::max_abs_diff(lhs.mat(), rhs.mat()) / linalg::max_abs(rhs.mat()));
        }
    }
    rows.push(Row::new("group_elements_invalid", A::GROUP, invalid as f64, Le, 0.0));
    rows.push(Row::new("covariance_max_residual", A::COVARIANCE, cov, Le, tol));
    rows.push(Row::new("u_g_preserves_charge", A::GROUP, charge, Le, tol));
    if elems.len() > 1 {
        rows.push(Row::new("group_law_composition", A::GROUP, law, Le, tol));
    }
    Ok(rows)
}

/// Decay slopes of the quantized symbol-calculus residuals at `t = 0` and
/// `t = t_max / 2` (worst of the two).
pub fn smoothing_residuals(cfg: &RunConfig, bundle: &ParametrixBundle) -> Result<Vec<Row>> {
    let model = bundle.model();
    let nt = bundle.options().truncation;
    let thr = slope_threshold(cfg, nt);
    let bands = &cfg.state.bands;
    let mut worst = [f64::NEG_INFINITY; 4];
    for t in [0.0, 0.5 * cfg.window.t_max] {
        let a = model_symbol(model, t)?;
        let e = epsilon_at(bundle.epsilon(), t);
        // symbolic remainders carry no cancellation, so no floor
        let s0 = slope(&quantize(&epsilon_remainder(&e, &a, 2)?), bands, 0.0)?;
        let s1 = slope(&quantize(&b_remainder(bundle.b(), bundle.epsilon(), t, 2)?), bands, 0.0)?;
        let inv = asymptotic_inverse(&a, nt)?;
        let one = PolyhomSymbol::one(model.grid());
        let s2 = slope(&quantize(&moyal_to_bottom(&a.as_exact(), &inv.as_exact(), inv.bottom() - 2.0)?.sub(&one)?), bands, 0.0)?;
        let (x, y) = (e.denoised(), asymptotic_inverse(&e, nt)?.denoised());
        let (qx, qy) = (quantize(&x), quantize(&y));
        let diff = quantize(&moyal_product(&x, &y, nt)?.denoised()).sub(&qx.compose(&qy)?)?;
        // matrix product round-off
        let floor = 1e-14 * qx.max_abs() * qy.max_abs() * model.grid().n() as f64;
        let s3 = slope(&diff, bands, floor)?;
        for (w, s) in worst.iter_mut().zip([s0, s1, s2, s3]) {
            *w = w.max(s);
        }
    }
    Ok(vec![
        Row::new("epsilon_square_residual_slope", A::EPSILON, worst[0], Le, thr),
        Row::new("b_equation_residual_slope", A::B_EQUATION, worst[1], Le, thr),
        Row::new("inverse_residual_slope", A::INVERSE, worst[2], Le, thr),
        Row::new("composition_residual_slope", A::INVERSE, worst[3], Le, thr),
    ])
}

/// Relative energy-norm errors of `U(t,0)f` against the direct solver.
#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    pub grid_n: usize,
    pub truncations: Vec<usize>,
    pub bands: Vec<usize>,
    pub times: Vec<f64>,
    /// `errors[i][k][j]` for truncation `i`, band `k`, time `j`.
    pub errors: Vec<Vec<Vec<f64>>>,
    /// Fitted slope of the worst-in-time error against the band, per truncation.
    pub slopes: Vec<f64>,
    pub oracle_error_estimate: f64,
}

impl OracleComparison {
    pub fn worst(&self, i: usize, k: usize) -> f64 {
        self.errors[i][k].iter().cloned().fold(0.0, f64::max)
    }

    /// Plot-ready `n,N,K,t,error` lines without header.
    pub fn csv_lines(&self) -> String {
        let mut s = String::new();
        for (i, nt) in self.truncations.iter().enumerate() {
            for (k, kb) in self.bands.iter().enumerate() {
                for (j, t) in self.times.iter().enumerate() {
                    s.push_str(&format!("{},{nt},{kb},{t},{:e}\n", self.grid_n, self.errors[i][k][j]));
                }
            }
        }
        s
    }
}

/// One oracle run shared by all truncations.
pub fn compare_with_oracle(cfg: &RunConfig, model: &ModelCoefficients, truncations: &[usize]) -> Result<OracleComparison> {
    let grid = model.grid();
    let mut rng = rng(cfg, SALT_ORACLE);
    let data: Vec<CauchyData> = cfg.verify.bands.iter().map(|&k| band_data(grid, k, &mut rng)).collect();
    let times = cfg.verify.times.clone();
    let mut all = vec![0.0];
    all.extend(&times);
    let sols = solve_cauchy_direct(model, &data, &all, cfg.oracle_options())?;
    let mut errors = Vec::with_capacity(truncations.len());
    let mut slopes = Vec::with_capacity(truncations.len());
    for &nt in truncations {
        let mut opts = cfg.parametrix_options();
        opts.truncation = nt;
        let bundle = ParametrixBundle::build(model, &opts)?;
        let ev = bundle.evolve(&data, &times)?;
        let e: Vec<Vec<f64>> = (0..data.len())
            .map(|d| {
                let norm = data[d].energy_norm();
                (0..times.len()).map(|j| Ok(ev[j][d].sub(&sols[d].cauchy(j + 1))?.energy_norm() / norm)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let pts: Vec<(f64, f64)> = cfg.verify.bands.iter().zip(&e).map(|(&k, row)| ((k as f64).ln(), row.iter().cloned().fold(0.0, f64::max).ln())).collect();
        slopes.push(fit_line(&pts).0);
        errors.push(e);
    }
    let est = sols.iter().map(|s| s.error_estimate).fold(0.0, f64::max);
    Ok(OracleComparison {
        grid_n: grid.n(),
        truncations: truncations.to_vec(),
        bands: cfg.verify.bands.clone(),
        times,
        errors,
        slopes,
        oracle_error_estimate: est,
    })
}

/// Slope rows per truncation; monotonicity rows for consecutive truncations.
pub fn oracle_rows(cmp: &OracleComparison, suffix: &str) -> Vec<Row> {
    let mut rows = Vec::new();
    for (i, &nt) in cmp.truncations.iter().enumerate() {
        rows.push(Row::new(format!("oracle_error_slope_N{nt}{suffix}"), A::ORACLE, cmp.slopes[i], Le, -(nt as f64 - 2.0)));
    }
    let top = cmp.bands.len() - 1;
    for i in 1..cmp.truncations.len() {
        let (lo, hi) = (cmp.truncations[i - 1], cmp.truncations[i]);
        let ratio = (0..cmp.bands.len()).map(|k| cmp.worst(i, k) / cmp.worst(i - 1, k)).fold(0.0, f64::max);
        rows.push(Row::new(format!("oracle_error_improves_N{lo}_to_N{hi}{suffix}"), A::ORACLE, ratio, Lt, 1.0));
        if hi == lo + 2 {
            let gain = cmp.worst(i, top) / cmp.worst(i - 1, top);
            rows.push(Row::new(format!("oracle_error_factor_N{lo}_to_N{hi}_K{}{suffix}", cmp.bands[top]), A::EVOLUTION, gain, Le, 0.25));
        }
    }
    rows
}

/// Vacuum against the canonical state, `b - ε` on a static model, KMS.
pub fn static_cross_check(cfg: &RunConfig, bundle: &ParametrixBundle) -> Result<Vec<Row>> {
    let model = bundle.model();
    if !model.is_static() {
        return Err(Error::Config("the static cross-check needs a time-independent model".into()));
    }
    let s = model.at(0.0)?;
    let a = diff_op_matrix(&s.a11, &s.b1, &s.m)?;
    let vac = static_vacuum(&a)?;
    let e_inv = GridOperator::new(model.grid(), linalg::herm_fn(a.mat(), |v| 1.0 / v.sqrt())?)?;
    let can = canonical_state(&e_inv)?;
    let mut rows = vec![Row::new("vacuum_equals_canonical_state", A::STATIC, vac.max_abs_diff(&can) / vac.scale(), Le, cfg.tolerances.identity)];
    let nt = bundle.options().truncation;
    let mut worst = f64::NEG_INFINITY;
    for t in [0.0, 0.5 * cfg.window.t_max, cfg.window.t_max] {
        let e = epsilon_at(bundle.epsilon(), t);
        let d = quantize(&bundle.b().at(t).sub(&e)?);
        let floor = 1e-14 * quantize(&e).max_abs() * model.grid().n() as f64;
        worst = worst.max(slope(&d, &cfg.state.bands, floor)?);
    }
    rows.push(Row::new("static_b_minus_epsilon_slope", A::STATIC, worst, Le, slope_threshold(cfg, nt)));
    let kms = static_kms(&a, cfg.state.beta)?;
    let (p, m) = positivity_margin(&kms)?;
    let tol = -cfg.tolerances.positivity * model.grid().n() as f64;
    rows.push(Row::new("kms_positivity_lambda", A::STATIC, p, Ge, tol));
    rows.push(Row::new("kms_positivity_lambda_minus_q", A::STATIC, m, Ge, tol));
    rows.push(Row::new("kms_purity_residual", A::STATIC, check_purity(&kms)?, Gt, 1e-3));
    Ok(rows)
}

/// Charge signs and orthogonality of the splitting on seeded data, and the
/// wrong-sign temporal frequency share of the exact solutions from `f±`.
pub fn splitting(cfg: &RunConfig, bundle: &ParametrixBundle) -> Result<Vec<Row>> {
    let grid = bundle.grid();
    let mut rng = rng(cfg, SALT_SPLIT);
    let (mut min_plus, mut max_minus, mut cross, mut recon) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let bands = &cfg.verify.bands;
    for i in 0..cfg.verify.split_count {
        let f = band_data(grid, bands[i % bands.len()], &mut rng);
        let (fp, fm) = bundle.split_data(&f)?;
        let (qp, qm) = (charge_pairing(&fp, &fp).re, charge_pairing(&fm, &fm).re);
        let e2 = f.energy_norm().powi(2);
        min_plus = min_plus.min(qp / e2);
        max_minus = max_minus.max(qm / e2);
        cross = cross.max(charge_pairing(&fp, &fm).norm() / (qp.abs() * qm.abs()).sqrt());
        recon = recon.max(fp.add(&fm)?.sub(&f)?.max_abs() / f.max_abs());
    }
    let tol = cfg.tolerances.identity;
    let mut rows = vec![
        Row::new("split_plus_charge_positive", A::CHARGE_SIGN, min_plus, Gt, 0.0),
        Row::new("split_minus_charge_negative", A::CHARGE_SIGN, max_minus, Lt, 0.0),
        Row::new("split_cross_pairing", A::ORTHOGONAL, cross, Le, tol),
        Row::new("split_sum_reconstructs", A::ORTHOGONAL, recon, Le, tol),
    ];

    let fb = &cfg.verify.frequency_bands;
    if fb.is_empty() {
        return Ok(rows);
    }
    let mut data = Vec::with_capacity(2 * fb.len());
    for &k in fb {
        let (fp, fm) = bundle.split_data(&band_data(grid, k, &mut rng))?;
        data.push(fp);
        data.push(fm);
    }
    let m = cfg.window.nodes.max(33);
    let times: Vec<f64> = (0..m).map(|i| cfg.window.t_max * i as f64 / (m - 1) as f64).collect();
    // the sign share needs far less accuracy than the evolution check
    let opts = OracleOptions { tol: cfg.tolerances.oracle.max(1e-8), ..cfg.oracle_options() };
    let sols = solve_cauchy_direct(bundle.model(), &data, &times, opts)?;
    let mut wrong = [Vec::new(), Vec::new()];
    for (i, &k) in fb.iter().enumerate() {
        let wp = frequency_sign_fraction(&sols[2 * i], FrequencySign::Negative)?;
        let wm = frequency_sign_fraction(&sols[2 * i + 1], FrequencySign::Positive)?;
        rows.push(Row::new(format!("plus_wrong_sign_fraction_K{k}"), A::WAVEFRONT, wp, Lt, 0.05));
        rows.push(Row::new(format!("minus_wrong_sign_fraction_K{k}"), A::WAVEFRONT, wm, Lt, 0.05));
        wrong[0].push(wp);
        wrong[1].push(wm);
    }
    for i in 1..fb.len() {
        for (s, name) in [(0, "plus"), (1, "minus")] {
            let ratio = wrong[s][i] / wrong[s][i - 1];
            rows.push(Row::new(format!("{name}_wrong_sign_decreases_K{}_to_K{}", fb[i - 1], fb[i]), A::WAVEFRONT, ratio, Lt, 1.0));
        }
    }
    Ok(rows)
}

/// Hadamard family over seeded specs, pure states, and preservation of
/// the microlocal proxy under `u_G`.
pub fn state_families(cfg: &RunConfig, frame: &Frame) -> Result<Vec<Row>> {
    let grid = frame.grid();
    let n = grid.n();
    let check = cfg.smoothing_check();
    let mut rng = rng(cfg, SALT_STATE);
    let (mut invalid, mut pmin, mut mmin, mut cs, mut musc) = (0usize, f64::INFINITY, f64::INFINITY, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..cfg.state.count {
        let spec = random_spec(grid, cfg.state.scale, &mut rng)?;
        if !spec.validate(grid, &check)?.pass {
            invalid += 1;
            continue;
        }
        let lam = hadamard_family(frame, &spec, &check)?;
        let (p, m) = positivity_margin(&lam)?;
        pmin = pmin.min(p);
        mmin = mmin.min(m);
        let tilde = lam.tilde(frame.t_inv());
        let (tpp, tpm, tmm) = (linalg::block(&tilde, 0, 0), linalg::block(&tilde, 0, 1), linalg::block(&tilde, 1, 1));
        for _ in 0..4 {
            let u: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let quad = |m: &CMat, x: &[C64], y: &[C64]| linalg::dot(x, &linalg::col_to_vec(&(m * linalg::col_vec(y)), 0));
            let rhs = (quad(&tpp, &u, &u).re * quad(&tmm, &v, &v).re).max(0.0).sqrt();
            if rhs > 0.0 {
                cs = cs.max(quad(&tpm, &u, &v).norm() / rhs);
            }
        }
        musc = musc.max(check_musc_proxy(&lam, frame.t_inv(), &check)?.slopes.into_iter().fold(f64::NEG_INFINITY, f64::max));
    }
    let tol = -cfg.tolerances.positivity * n as f64;
    let mut rows = vec![
        Row::new("family_specs_invalid", A::FAMILY, invalid as f64, Le, 0.0),
        Row::new("family_positivity_lambda", A::POSITIVITY, pmin, Ge, tol),
        Row::new("family_positivity_lambda_minus_q", A::POSITIVITY, mmin, Ge, tol),
        Row::new("family_cauchy_schwarz_ratio", A::POSITIVITY, cs, Le, 1.0 + cfg.tolerances.identity),
        Row::new("family_musc_worst_slope", A::MUSC, musc, Le, check.threshold),
    ];

    let (mut purity, mut swap, mut charge, mut tilde) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cfg.state.count.clamp(1, 5) {
        let a = random_smoothing(grid, cfg.state.scale, 3.0, &mut rng);
        let lam = pure_state_from(frame, &a, &check)?;
        purity = purity.max(check_purity(&lam)? / lam.scale());
        let it = intertwiner_check(&a)?;
        swap = swap.max(it.swap);
        charge = charge.max(it.charge);
        tilde = tilde.max(it.tilde);
    }
    let ptol = cfg.tolerances.purity;
    rows.push(Row::new("pure_state_purity", A::CANONICAL_FORM, purity, Le, ptol));
    rows.push(Row::new("intertwiner_swap", A::CANONICAL_FORM, swap, Le, ptol));
    rows.push(Row::new("intertwiner_charge", A::INTERTWINER, charge, Le, ptol));
    rows.push(Row::new("intertwiner_tilde", A::INTERTWINER, tilde, Le, ptol));

    let lam = canonical_state(frame.r())?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cfg.group.count.clamp(1, 3) {
        let u = u_of_g(&random_group_element(grid, cfg.group.scale, &mut rng));
        let moved = TwoPointFunction::new(grid, u.adjoint() * lam.lambda() * &u)?;
        worst = worst.max(check_musc_proxy(&moved, frame.t_inv(), &check)?.slopes.into_iter().fold(f64::NEG_INFINITY, f64::max));
    }
    rows.push(Row::new("group_conjugation_musc_worst_slope", A::PRESERVATION, worst, Le, check.threshold));
    Ok(rows)
}

/// Two-chart gluing of the canonical state.
pub fn gluing(cfg: &RunConfig, frame: &Frame) -> Result<Vec<Row>> {
    let grid = frame.grid();
    let windows = partition_windows(grid, cfg.glue.charts, cfg.glue.overlap)?;
    let lam = canonical_state(frame.r())?;
    let charts: Vec<_> = windows.iter().map(|w| (w.clone(), lam.clone())).collect();
    let glued = glue_states(&charts)?;
    let (p, m) = positivity_margin(&glued)?;
    let tol = -cfg.tolerances.positivity * grid.n() as f64;
    let check = cfg.smoothing_check();
    let musc = check_musc_proxy(&glued, frame.t_inv(), &check)?;
    let mut rows = vec![
        Row::new("partition_of_unity_defect", A::GLUING, partition_defect(&windows), Le, 1e-12),
        Row::new("charge_reconstruction", A::GLUING, q_reconstruction(&windows), Le, 1e-12),
        Row::new("glued_positivity_lambda", A::GLUING, p, Ge, tol),
        Row::new("glued_positivity_lambda_minus_q", A::GLUING, m, Ge, tol),
    ];
    for (name, s) in ["mm", "pm", "mp", "one_minus_pp"].iter().zip(musc.slopes) {
        rows.push(Row::new(format!("glued_musc_slope_{name}"), A::MUSC, s, Le, check.threshold));
    }
    Ok(rows)
}

/// Static explicit model of the Egorov check.
pub fn egorov_model(cfg: &RunConfig) -> Result<ModelCoefficients> {
    let e = ExplicitCoefficients { a11: cfg.egorov.a11.clone(), b1_re: FieldSpec::zero(), b1_im: FieldSpec::zero(), m: FieldSpec::constant(1.0) };
    ModelCoefficients::new(&cfg.spatial_grid()?, ModelSource::Explicit(e), cfg.window.t_max)
}

/// Flow volume preservation, the Egorov packet test and the metric
/// factorization (when the model comes from metric data).
pub fn geometry(cfg: &RunConfig, model: &ModelCoefficients) -> Result<Vec<Row>> {
    let grid = model.grid();
    let mut det = 0.0f64;
    for p in sample_phase_points(grid, 8, (4.0, 16.0), cfg.seed ^ SALT_FLOW) {
        for sign in [FlowSign::Plus, FlowSign::Minus] {
            det = det.max((flow_jacobian_det(model, sign, cfg.window.t_max, 0.0, p, FlowOptions::default())? - 1.0).abs());
        }
    }
    let mut rows = vec![Row::new("flow_jacobian_determinant", A::FLOW, det, Le, 1e-6)];
    if let Some(md) = cfg.model.metric_data() {
        rows.push(Row::new("factorization_residual", A::FACTORIZATION, factorization_check(model, &md, cfg.window.t_max, cfg.seed)?, Lt, 1e-8));
    }

    let em = egorov_model(cfg)?;
    let mut opts = cfg.parametrix_options();
    opts.truncation = cfg.egorov.truncation;
    opts.window_nodes = cfg.egorov.nodes;
    let bundle = ParametrixBundle::build(&em, &opts)?;
    let a = PolyhomSymbol::from_function(&GridFunction::from_real_fn(grid, |x| x.sin()));
    let eo = EgorovOptions { points: cfg.egorov.points, base_mode: cfg.egorov.base_mode, seed: cfg.seed, flow: FlowOptions::default() };
    let rep = egorov_check(&a, cfg.egorov.t, &bundle, eo)?;
    let (dev, other) = match rep.sign {
        FlowSign::Plus => (rep.deviation_plus, rep.deviation_minus),
        FlowSign::Minus => (rep.deviation_minus, rep.deviation_plus),
    };
    rows.push(Row::new("egorov_deviation_ratio_low", A::EGOROV, rep.ratio, Ge, 1.5));
    rows.push(Row::new("egorov_deviation_ratio_high", A::EGOROV, rep.ratio, Le, 3.0));
    rows.push(Row::new("egorov_sign_separation", A::EGOROV, other[1] / dev[1], Ge, 10.0));
    rows.push(Row::new("egorov_plus_branch_sign", A::EGOROV, if rep.sign == FlowSign::Plus { 1.0 } else { 0.0 }, Ge, 1.0));
    Ok(rows)
}

/// Ellipticity of `E(0)` and the spectral bounds reached by `r`.
pub fn bundle_rows(cfg: &RunConfig, bundle: &ParametrixBundle) -> Result<Vec<Row>> {
    let n = bundle.grid().n();
    let tol = cfg.tolerances.identity;
    let cut = bundle.cutoff();
    Ok(vec![
        Row::new("t_times_t_inverse", A::T_INVERSE, rel_identity_defect(&(bundle.t() * bundle.t_inv()), &linalg::identity(2 * n)), Le, tol),
        Row::new("d_plus_plus_d_minus", A::D_SUM, rel_identity_defect(bundle.d_plus().add(bundle.d_minus())?.mat(), &linalg::identity(n)), Le, tol),
        Row::new("epsilon_ellipticity_constant", A::EPSILON, bundle.ellipticity_constant(0.0)?, Gt, 0.0),
        Row::new("r_spectral_lower_bound", A::R_SPECTRUM, cut.min_eig, Ge, cfg.contour.spectral_floor),
    ])
}
