use hadamard_core::grid::{GridFunction, GridOperator, SpatialGrid};
use hadamard_core::io::{decode_matrix, encode_matrix};
use hadamard_core::linalg;
use hadamard_core::report::{Relation, Row};
use hadamard_core::states::*;
use hadamard_core::symbol::{moyal_product, PolyhomSymbol};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 64;

fn grid() -> SpatialGrid {
    SpatialGrid::periodic_2pi(N).unwrap()
}

/// `r = ½⟨D⟩⁻¹ + smoothing`, a valid choice with `r + r^† > 0`.
fn base_r(seed: u64) -> GridOperator {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = GridOperator::fourier_multiplier(&g, |k| C64::new(0.5 / (1.0 + k * k).sqrt(), 0.0));
    GridOperator::new(&g, w.mat() + random_smoothing(&g, 0.02, 3.0, &mut rng)).unwrap()
}

fn check() -> SmoothingCheck {
    SmoothingCheck { bands: vec![4, 8, 16], threshold: -3.0, floor: 1e-13 }
}

fn vector(seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..N).map(|_| C64::new(rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fft_is_unitary(seed in any::<u64>()) {
        let g = grid();
        let v = vector(seed);
        let mut w = v.clone();
        g.fft(&mut w);
        let n2 = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>();
        prop_assert!((n2(&v) - n2(&w)).abs() < 1e-12 * n2(&v));
        g.ifft(&mut w);
        prop_assert!(v.iter().zip(&w).all(|(a, b)| (a - b).norm() < 1e-13));
    }

    #[test]
    fn matrix_encoding_roundtrips(seed in any::<u64>(), flip in 32usize..1000) {
        let g = SpatialGrid::periodic_2pi(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_smoothing(&g, 1.0, 2.0, &mut rng);
        let bytes = encode_matrix(&g, &m);
        let (h, back) = decode_matrix(&bytes).unwrap();
        prop_assert_eq!(h.n, 8);
        prop_assert_eq!(linalg::max_abs_diff(&m, &back), 0.0);
        let mut bad = bytes.clone();
        let i = flip % bad.len();
        bad[i] ^= 0x10;
        prop_assert!(decode_matrix(&bad).is_err());
    }

    #[test]
    fn group_action_composes(s1 in any::<u64>(), s2 in any::<u64>()) {
        let g = grid();
        let r = base_r(s1 ^ s2);
        let mut rng = ChaCha8Rng::seed_from_u64(s1);
        let g1 = random_group_element(&g, 0.2, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(s2);
        let g2 = random_group_element(&g, 0.2, &mut rng);
        let step = group_act(&g2, &group_act(&g1, &r).unwrap()).unwrap();
        let once = group_act(&g2.compose(&g1), &r).unwrap();
        prop_assert!(step.max_abs_diff(&once) < 1e-12 * r.max_abs().max(1.0));
        // the symplectic lifts multiply in the opposite order
        let lift = linalg::max_abs_diff(&u_of_g(&g2.compose(&g1)), &(u_of_g(&g1) * u_of_g(&g2)));
        prop_assert!(lift < 1e-12, "{}", lift);
    }

    #[test]
    fn group_preserves_hadamard_states(seed in any::<u64>()) {
        let g = grid();
        let r = base_r(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let ge = random_group_element(&g, 0.2, &mut rng);
        prop_assert!(ge.validate(&g, &check()).unwrap().pass);
        let cov = covariance_check(&ge, &r).unwrap();
        prop_assert!(cov.pass, "{:?}", cov);

        let frame = Frame::new(&r).unwrap();
        let spec = random_spec(&g, 0.3, &mut rng).unwrap();
        let lam = hadamard_family(&frame, &spec, &check()).unwrap();
        let u = u_of_g(&ge);
        let moved = TwoPointFunction::new(&g, u.adjoint() * lam.lambda() * &u).unwrap();
        let target = Frame::new(&group_act(&ge, &r).unwrap()).unwrap();
        let musc = check_musc_proxy(&moved, target.t_inv(), &check()).unwrap();
        prop_assert!(musc.pass, "{:?}", musc);
        prop_assert!(check_positivity(&moved).unwrap().pass);
    }

    #[test]
    fn family_members_are_positive(seed in any::<u64>(), scale in 0.05f64..1.0) {
        let g = grid();
        let frame = Frame::new(&base_r(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&g, scale, &mut rng).unwrap();
        let lam = hadamard_family(&frame, &spec, &check()).unwrap();
        let pos = check_positivity(&lam).unwrap();
        prop_assert!(pos.pass, "{:?}", pos);
        prop_assert!(check_musc_proxy(&lam, frame.t_inv(), &check()).unwrap().pass);
    }

    #[test]
    fn pure_states_are_pure(seed in any::<u64>(), scale in 0.05f64..1.0) {
        let g = grid();
        let frame = Frame::new(&base_r(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_smoothing(&g, scale, 3.0, &mut rng);
        let lam = pure_state_from(&frame, &a, &check()).unwrap();
        let purity = check_purity(&lam).unwrap();
        prop_assert!(purity < 1e-9 * lam.scale().max(1.0).powi(2), "{}", purity);
        prop_assert!(check_positivity(&lam).unwrap().pass);
    }

    #[test]
    fn report_rows_never_pass_nan(v in prop::num::f64::ANY, thr in -1e3f64..1e3) {
        for rel in [Relation::Le, Relation::Ge, Relation::Lt, Relation::Gt] {
            let row = Row::new("x", "y", v, rel, thr);
            prop_assert_eq!(row.value.is_some(), v.is_finite());
            if v.is_nan() {
                prop_assert!(!row.pass);
            }
        }
    }

    #[test]
    fn moyal_unit_and_order(c in 0.5f64..2.0, amp in 0.0f64..0.4, depth in 2usize..5) {
        let g = SpatialGrid::periodic_2pi(32).unwrap();
        let f = GridFunction::from_real_fn(&g, |x| c + amp * x.cos());
        let a = PolyhomSymbol::homogeneous(&f, 1.0);
        let b = PolyhomSymbol::homogeneous(&f, -1.0);
        let ab = moyal_product(&a, &b, depth).unwrap();
        prop_assert_eq!(ab.top_order(), 0.0);
        let one = moyal_product(&PolyhomSymbol::one(&g), &a, depth).unwrap();
        for (x, k) in [(0.3, 5.0), (2.0, -11.0), (4.0, 40.0)] {
            let d = (one.eval(x, k) - a.eval(x, k)).norm();
            prop_assert!(d < 1e-10 * a.eval(x, k).norm().max(1.0), "{}", d);
        }
    }
}
