use c0_estimate::hermlin::{
    endomorphism_eigs, linearization_g, linearize, theta, tilde_from_hessian, verify_lemma1, HermitianMatrix,
};
use c0_estimate::sampling::{complex_gaussian_matrix, hermitian_with_eigenvalues, random_hermitian, random_metric, rng, ConeSampler};
use c0_estimate::symfun::{combine, OperatorSpec};
use c0_estimate::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;

fn operators() -> &'static [OperatorSpec] {
    static OPS: OnceLock<Vec<OperatorSpec>> = OnceLock::new();
    OPS.get_or_init(|| {
        vec![
            OperatorSpec::monge_ampere(2).unwrap(),
            OperatorSpec::monge_ampere(3).unwrap(),
            OperatorSpec::hessian(3, 2).unwrap(),
            OperatorSpec::p_monge_ampere(3, 2).unwrap(),
            combine(&[OperatorSpec::monge_ampere(2).unwrap(), OperatorSpec::hessian(2, 1).unwrap()], &[1.0, 0.5])
                .unwrap(),
        ]
    })
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `(g, g̃)` with `λ[g⁻¹g̃]` drawn inside the operator's cone.
fn admissible_pair(spec: &OperatorSpec, seed: u64) -> (HermitianMatrix, HermitianMatrix) {
    let n = spec.n();
    let mut sampler = ConeSampler::new(spec.cone().clone(), n, seed);
    let lambda = sampler.sample().unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let g = random_metric(&mut r, n, 0.3);
    let l = g.cholesky().unwrap();
    let core = hermitian_with_eigenvalues(&mut r, lambda.values());
    let gt = HermitianMatrix::from_matrix_unchecked(&l * core.matrix() * l.adjoint()).symmetrized();
    (g, gt)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_identity_and_positivity(which in 0usize..5, seed in any::<u64>()) {
        let spec = &operators()[which];
        let (g, gt) = admissible_pair(spec, seed);
        let big_g = linearization_g(spec, &g, &gt).unwrap();
        prop_assert!((big_g.pair(&gt) - 1.0).abs() <= 1e-10);
        prop_assert!(big_g.is_positive_definite());
        let th = theta(&big_g, &g).unwrap();
        prop_assert!(th.is_positive_definite());
    }

    #[test]
    fn lemma1_chain(which in 0usize..5, seed in any::<u64>()) {
        let spec = &operators()[which];
        let n = spec.n();
        let mut r = rng(seed);
        let g = random_metric(&mut r, n, 0.3);
        let g_h = random_metric(&mut r, n, 0.3);
        let mut hessian = random_hermitian(&mut r, n).scale(0.3);
        let gt = loop {
            let gt = tilde_from_hessian(&g, &g_h, &hessian).unwrap();
            let lambda = endomorphism_eigs(&g, &gt).unwrap();
            if spec.cone().check_interior(&lambda).is_ok() {
                break gt;
            }
            hessian = hessian.scale(0.5);
        };
        let report = verify_lemma1(spec, &g, &g_h, &gt, &hessian).unwrap();
        prop_assert!(report.residual_a <= 1e-9, "{report:?}");
        prop_assert!(report.pd_b > 0.0);
        prop_assert!(report.slack_b >= -1e-12);
        prop_assert!(report.det_theta >= report.det_g_coeff * (1.0 - 1e-10));
        prop_assert!(report.trace_identity_residual <= 1e-10);
    }

    #[test]
    fn eigenvalues_are_frame_independent(seed in any::<u64>()) {
        let spec = &operators()[2];
        let (g, gt) = admissible_pair(spec, seed);
        let mut r = rng(seed.wrapping_add(1));
        let p = complex_gaussian_matrix(&mut r, 3) + DMatrix::identity(3, 3) * c(2.0, 0.0);
        let conj = |m: &HermitianMatrix| HermitianMatrix::from_matrix_unchecked(p.adjoint() * m.matrix() * &p).symmetrized();
        let a = sorted(endomorphism_eigs(&g, &gt).unwrap().into());
        let b = sorted(endomorphism_eigs(&conj(&g), &conj(&gt)).unwrap().into());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn linearization_matches_finite_differences(which in 0usize..5, seed in any::<u64>()) {
        let spec = &operators()[which];
        let (g, gt) = admissible_pair(spec, seed);
        let lin = linearize(spec, &g, &gt).unwrap();
        let mut r = rng(seed.wrapping_mul(3));
        let delta = random_hermitian(&mut r, spec.n());
        let t = 1e-6;
        let log_f = |m: &HermitianMatrix| spec.eval(&endomorphism_eigs(&g, m).unwrap()).unwrap().ln();
        let fd = (log_f(&gt.add(&delta.scale(t))) - log_f(&gt.sub(&delta.scale(t)))) / (2.0 * t);
        let exact = lin.g_coeff.pair(&delta);
        prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-2), "{fd} vs {exact}");
    }
}

#[test]
fn endomorphism_examples() {
    let i2 = HermitianMatrix::identity(2);
    let e = endomorphism_eigs(&i2, &HermitianMatrix::from_real_diagonal(&[2.0, 3.0])).unwrap();
    assert_eq!(sorted(e.into()), vec![2.0, 3.0]);
    let d2 = HermitianMatrix::from_real_diagonal(&[2.0, 2.0]);
    let e: Vec<f64> = endomorphism_eigs(&d2, &d2).unwrap().into();
    assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-15));
    let m = HermitianMatrix::from_rows(2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)]).unwrap();
    let e = sorted(endomorphism_eigs(&i2, &m).unwrap().into());
    assert!(e[0].abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
    let bad = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]);
    assert!(matches!(endomorphism_eigs(&bad, &i2), Err(Error::MetricDegeneracy { .. })));
}

#[test]
fn linearization_and_theta_examples() {
    let ma = OperatorSpec::monge_ampere(2).unwrap();
    let i2 = HermitianMatrix::identity(2);
    let big_g = linearization_g(&ma, &i2, &HermitianMatrix::from_real_diagonal(&[1.0, 4.0])).unwrap();
    assert!(big_g.sub(&HermitianMatrix::from_real_diagonal(&[0.5, 0.125])).max_abs() < 1e-15);
    let th = theta(&big_g, &i2).unwrap();
    assert!(th.sub(&HermitianMatrix::from_real_diagonal(&[0.125, 0.5])).max_abs() < 1e-15);
    assert!((th.determinant() - 1.0 / 16.0).abs() < 1e-15);
    assert!((big_g.determinant() - 1.0 / 16.0).abs() < 1e-15);

    let i3 = HermitianMatrix::identity(3);
    for spec in operators().iter().filter(|s| s.n() == 3) {
        let big_g = linearization_g(spec, &i3, &i3).unwrap();
        assert!(big_g.sub(&i3.scale(1.0 / 3.0)).max_abs() < 1e-14);
    }
    let h1 = OperatorSpec::hessian(3, 1).unwrap();
    let big_g = linearization_g(&h1, &i3, &HermitianMatrix::from_real_diagonal(&[1.0, 2.0, 3.0])).unwrap();
    assert!(big_g.sub(&i3.scale(1.0 / 6.0)).max_abs() < 1e-15);
    assert!(theta(&i3, &i3).unwrap().sub(&i3).max_abs() < 1e-15);
    let one = HermitianMatrix::identity(1);
    assert!(matches!(theta(&one, &one), Err(Error::UnsupportedDimension(1))));
}

#[test]
fn lemma1_rejects_inconsistent_tilde() {
    let ma = OperatorSpec::monge_ampere(2).unwrap();
    let i2 = HermitianMatrix::identity(2);
    let hessian = HermitianMatrix::from_real_diagonal(&[0.1, 0.2]);
    let wrong = HermitianMatrix::from_real_diagonal(&[1.5, 1.5]);
    assert!(matches!(verify_lemma1(&ma, &i2, &i2, &wrong, &hessian), Err(Error::InconsistentInput(_))));
    let report = verify_lemma1(&ma, &i2, &i2, &i2, &HermitianMatrix::zeros(2)).unwrap();
    assert_eq!(report.residual_a, 0.0);
    assert!(report.passes());
}
