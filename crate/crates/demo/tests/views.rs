use c0_estimate_demo::{comparison_view, operator_view, theta_view};

#[test]
fn operator_view_reports_value_and_gradient() {
    let v = operator_view("ma", &[1.0, 4.0]).unwrap();
    assert!(v.in_cone);
    assert!((v.f.unwrap() - 2.0).abs() < 1e-14);
    let grad = v.grad.unwrap();
    assert!((grad[0] - 1.0).abs() < 1e-14 && (grad[1] - 0.25).abs() < 1e-14);
    assert!(v.euler_residual.unwrap().abs() < 1e-14);
    assert!(v.gradient_ratio.unwrap() >= 1.0 - 1e-12);
}

#[test]
fn operator_view_outside_cone_has_no_value() {
    let v = operator_view("hessian(2)", &[1.0, -2.0, 0.5]).unwrap();
    assert!(!v.in_cone);
    assert!(v.f.is_none() && v.grad.is_none());
    assert!(!v.functionals.is_empty());
    assert!(operator_view("nonsense", &[1.0, 1.0]).is_err());
}

#[test]
fn theta_view_at_zero_hessian_passes() {
    let v = theta_view("ma", 3, 4, 0.0).unwrap();
    assert!(v.in_cone);
    let r = v.report.unwrap();
    assert!(r.passes(), "{r:?}");
    assert!(v.theta_eigs.iter().all(|&t| t > 0.0));
    let product: f64 = v.g_coeff_eigs.iter().product();
    assert!((product - r.det_g_coeff).abs() <= 1e-9 * r.det_g_coeff);
}

#[test]
fn comparison_view_is_consistent() {
    let v = comparison_view(10, 0.02, 0.25, 2, 1.0, 51).unwrap();
    assert_eq!(v.tau.len(), 51);
    assert!(v.tau.iter().all(|&(_, t)| t >= 0.05 - 1e-15));
    assert!((v.tau[0].1 - 0.05).abs() < 1e-15);
    let (_, psi0, b0) = v.barrier[0];
    assert_eq!(psi0, -1.0);
    assert!((b0 + v.epsilon).abs() < 1e-15);
    assert_eq!(v.barrier[50].2, 0.0);
    assert!(comparison_view(0, 0.02, 0.25, 2, 1.0, 51).is_err());
}
