use c0_estimate::symfun::{
    combine, eval_f, gamma_lower_bound, grad_f, in_cone, sigma, ConeSpec, EigenTuple, OperatorDescriptor,
    OperatorSpec,
};
use proptest::prelude::*;
use std::sync::OnceLock;

fn operators() -> &'static [OperatorSpec] {
    static OPS: OnceLock<Vec<OperatorSpec>> = OnceLock::new();
    OPS.get_or_init(|| vec![
        OperatorSpec::monge_ampere(2).unwrap(),
        OperatorSpec::monge_ampere(3).unwrap(),
        OperatorSpec::hessian(3, 1).unwrap(),
        OperatorSpec::hessian(3, 2).unwrap(),
        OperatorSpec::p_monge_ampere(3, 2).unwrap(),
        combine(
            &[OperatorSpec::monge_ampere(3).unwrap(), OperatorSpec::hessian(3, 2).unwrap()],
            &[0.7, 1.3],
        )
        .unwrap(),
    ])
}

/// Draws a tuple for operator `which` strictly inside its cone.
fn admissible() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (0..6usize, prop::collection::vec(-1.0f64..3.0, 3)).prop_filter_map("outside cone", |(which, mut v)| {
        let spec = &operators()[which];
        v.truncate(spec.n());
        let lambda = EigenTuple::new(v.clone()).ok()?;
        spec.cone().check_interior(&lambda).ok()?;
        // keep away from the boundary so finite differences stay meaningful
        let margin = spec.cone().functionals(&lambda).ok()?.iter().map(|(_, f)| *f).fold(f64::INFINITY, f64::min);
        (margin > 1e-3).then_some((which, v))
    })
}

/// Elementary symmetric polynomials straight from the subset definition.
fn sigma_by_subsets(v: &[f64], j: usize) -> f64 {
    (0u32..1 << v.len())
        .filter(|m| m.count_ones() as usize == j)
        .map(|m| (0..v.len()).filter(|i| m >> i & 1 == 1).map(|i| v[i]).product::<f64>())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sigma_matches_subset_expansion(v in prop::collection::vec(-3.0f64..3.0, 2..6), j in 1usize..6) {
        prop_assume!(j <= v.len());
        let lambda = EigenTuple::new(v.clone()).unwrap();
        let a = sigma(&lambda, j).unwrap();
        let b = sigma_by_subsets(&v, j);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()) * 10f64.powi(j as i32));
    }

    #[test]
    fn permutation_symmetry((which, v) in admissible(), shift in 0usize..3) {
        let spec = &operators()[which];
        let lambda = EigenTuple::new(v.clone()).unwrap();
        let perm: Vec<usize> = (0..v.len()).map(|i| (i + shift) % v.len()).rev().collect();
        let f = eval_f(spec, &lambda).unwrap();
        let fp = eval_f(spec, &lambda.permuted(&perm)).unwrap();
        prop_assert!((f - fp).abs() <= 1e-12 * f.abs());
    }

    #[test]
    fn homogeneity_and_euler((which, v) in admissible(), t in 0.1f64..10.0) {
        let spec = &operators()[which];
        let lambda = EigenTuple::new(v.clone()).unwrap();
        let f = eval_f(spec, &lambda).unwrap();
        prop_assert!(f > 0.0);
        let ft = eval_f(spec, &lambda.scaled(t)).unwrap();
        prop_assert!((ft - t * f).abs() <= 1e-10 * t * f);
        let grad = grad_f(spec, &lambda).unwrap();
        prop_assert!(grad.iter().all(|&d| d > 0.0));
        let euler: f64 = grad.iter().zip(&v).map(|(d, l)| d * l).sum();
        prop_assert!((euler - f).abs() <= 1e-10 * f);
    }

    #[test]
    fn structural_bound_holds((which, v) in admissible()) {
        let spec = &operators()[which];
        let lambda = EigenTuple::new(v).unwrap();
        let product: f64 = grad_f(spec, &lambda).unwrap().iter().product();
        prop_assert!(product >= spec.gamma() * (1.0 - 1e-9));
    }

    #[test]
    fn gradient_matches_central_differences((which, v) in admissible()) {
        let spec = &operators()[which];
        let lambda = EigenTuple::new(v.clone()).unwrap();
        let grad = grad_f(spec, &lambda).unwrap();
        // a fraction of the distance to the cone edge, so the stencil never sees the singularity
        let margin = spec.cone().functionals(&lambda).unwrap().iter().map(|(_, f)| *f).fold(f64::INFINITY, f64::min);
        let step = 1e-4 * margin.min(1.0);
        for j in 0..v.len() {
            let mut plus = v.clone();
            let mut minus = v.clone();
            plus[j] += step;
            minus[j] -= step;
            let fd = (eval_f(spec, &EigenTuple::new(plus).unwrap()).unwrap()
                - eval_f(spec, &EigenTuple::new(minus).unwrap()).unwrap())
                / (2.0 * step);
            prop_assert!((fd - grad[j]).abs() <= 1e-6 * grad[j].abs().max(1e-3), "{fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn gamma_k_cones_are_nested(v in prop::collection::vec(-2.0f64..3.0, 4)) {
        let lambda = EigenTuple::new(v).unwrap();
        let mut inside_higher = in_cone(&lambda, &ConeSpec::GammaK(4)).unwrap();
        for k in (1..4).rev() {
            let inside = in_cone(&lambda, &ConeSpec::GammaK(k)).unwrap();
            prop_assert!(!inside_higher || inside);
            inside_higher = inside;
        }
    }

    #[test]
    fn intersection_is_conjunction(v in prop::collection::vec(-2.0f64..3.0, 3)) {
        let lambda = EigenTuple::new(v).unwrap();
        let parts = [ConeSpec::GammaK(2), ConeSpec::PIndexCone(2)];
        let both = in_cone(&lambda, &ConeSpec::Intersection(parts.to_vec())).unwrap();
        let each = parts.iter().all(|c| in_cone(&lambda, c).unwrap());
        prop_assert_eq!(both, each);
    }

    #[test]
    fn p_index_cone_matches_pair_sums(v in prop::collection::vec(-2.0f64..3.0, 3)) {
        let lambda = EigenTuple::new(v.clone()).unwrap();
        let direct = (0..3).all(|i| ((i + 1)..3).all(|j| v[i] + v[j] > 0.0));
        prop_assert_eq!(in_cone(&lambda, &ConeSpec::PIndexCone(2)).unwrap(), direct);
    }

    #[test]
    fn single_term_combination_is_transparent((which, v) in admissible()) {
        let spec = operators()[which].clone();
        let lambda = EigenTuple::new(v).unwrap();
        let combo = combine(std::slice::from_ref(&spec), &[1.0]).unwrap();
        let (a, b) = (eval_f(&spec, &lambda).unwrap(), eval_f(&combo, &lambda).unwrap());
        prop_assert!((a - b).abs() <= 1e-14 * a);
        for (x, y) in grad_f(&spec, &lambda).unwrap().iter().zip(grad_f(&combo, &lambda).unwrap()) {
            prop_assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
    }
}

#[test]
fn worked_examples() {
    let t = |v: &[f64]| EigenTuple::new(v.to_vec()).unwrap();
    assert_eq!(sigma(&t(&[1.0, 1.0, 1.0]), 2).unwrap(), 3.0);
    assert_eq!(sigma(&t(&[2.0, 3.0]), 1).unwrap(), 5.0);
    assert_eq!(sigma(&t(&[1.0, 2.0, 3.0]), 3).unwrap(), 6.0);
    assert!(sigma(&t(&[1.0, 2.0]), 3).is_err());

    assert!(in_cone(&t(&[-1.0, 3.0]), &ConeSpec::GammaK(1)).unwrap());
    assert!(!in_cone(&t(&[-1.0, 3.0]), &ConeSpec::GammaK(2)).unwrap());
    assert!(in_cone(&t(&[-1.0, 3.0, 3.0]), &ConeSpec::PIndexCone(2)).unwrap());

    let h1 = OperatorSpec::hessian(3, 1).unwrap();
    assert!((eval_f(&h1, &t(&[1.0, 2.0, 3.0])).unwrap() - 2.0).abs() < 1e-15);
    for d in grad_f(&h1, &t(&[0.3, -0.1, 2.0])).unwrap() {
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
    }
    let pma = OperatorSpec::p_monge_ampere(3, 2).unwrap();
    assert!((eval_f(&pma, &t(&[1.0, 1.0, 1.0])).unwrap() - 2.0).abs() < 1e-14);

    let ma = OperatorSpec::monge_ampere(2).unwrap();
    let g = grad_f(&ma, &t(&[1.0, 4.0])).unwrap();
    assert!((g[0] - 1.0).abs() < 1e-15 && (g[1] - 0.25).abs() < 1e-15);

    let combo = combine(&[ma.clone(), OperatorSpec::hessian(2, 1).unwrap()], &[1.0, 1.0]).unwrap();
    assert!((eval_f(&combo, &t(&[1.0, 1.0])).unwrap() - 2.0).abs() < 1e-15);
    assert_eq!(combo.cone(), &ConeSpec::GammaK(2));
    assert!(combine(&[ma], &[0.0]).is_err());
}

#[test]
fn gamma_values() {
    for n in 2..=4 {
        let ma = gamma_lower_bound(&OperatorSpec::monge_ampere(n).unwrap(), 1).unwrap();
        assert!(ma.certified);
        assert_eq!(ma.value, (n as f64).powi(-(n as i32)));
    }
    let h1 = OperatorSpec::hessian(3, 1).unwrap();
    assert!((h1.gamma() - 1.0 / 27.0).abs() < 1e-15);
    let pma = gamma_lower_bound(&OperatorSpec::p_monge_ampere(3, 2).unwrap(), 2000).unwrap();
    assert!(!pma.certified);
    assert!(pma.value > 0.0);
}

#[test]
fn descriptors_round_trip() {
    for text in ["ma", "hessian(2)", "pma(2)", "combo(0.5*ma,2*hessian(1))"] {
        let d: OperatorDescriptor = text.parse().unwrap();
        let again: OperatorDescriptor = d.to_string().parse().unwrap();
        assert_eq!(d, again);
        let spec = d.build(3).unwrap();
        assert_eq!(spec.descriptor(), d);
    }
    for bad in ["", "ma(", "hessian(x)", "combo()", "combo(-1*ma)", "laplace"] {
        assert!(bad.parse::<OperatorDescriptor>().is_err() || bad.parse::<OperatorDescriptor>().unwrap().build(3).is_err(), "{bad}");
    }
}
