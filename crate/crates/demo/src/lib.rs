//! Browser bindings for three small views: operators and cones, the Θ
//! tensor at a random point, and the smoothed positive part with its
//! comparison barrier. Every export takes plain numbers or strings and
//! returns a JSON string.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use c0_estimate::auxiliary::{epsilon_constant, tau_k};
use c0_estimate::hermlin::{endomorphism_eigs, linearize, theta, tilde_from_hessian, verify_lemma1, Lemma1Report};
use c0_estimate::sampling::{random_hermitian, random_metric, rng};
use c0_estimate::symfun::{gradient_product, EigenTuple, OperatorDescriptor};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct OperatorView {
    pub operator: String,
    pub cone: String,
    pub functionals: Vec<(String, f64)>,
    pub in_cone: bool,
    pub gamma: f64,
    pub f: Option<f64>,
    pub grad: Option<Vec<f64>>,
    /// `Σ λ_j ∂f/∂λ_j − f`.
    pub euler_residual: Option<f64>,
    /// `∏ ∂f/∂λ_j / γ`.
    pub gradient_ratio: Option<f64>,
}

pub fn operator_view(descriptor: &str, lambda: &[f64]) -> Result<OperatorView, String> {
    let op: OperatorDescriptor = descriptor.parse().map_err(|e| format!("{e}"))?;
    let spec = op.build(lambda.len()).map_err(|e| e.to_string())?;
    let lambda = EigenTuple::new(lambda.to_vec()).map_err(|e| e.to_string())?;
    let cone = spec.cone();
    let mut view = OperatorView {
        operator: spec.descriptor().to_string(),
        cone: cone.to_string(),
        functionals: cone.functionals(&lambda).map_err(|e| e.to_string())?,
        in_cone: cone.check_interior(&lambda).is_ok(),
        gamma: spec.gamma(),
        f: None,
        grad: None,
        euler_residual: None,
        gradient_ratio: None,
    };
    if view.in_cone {
        let (f, grad) = spec.eval_grad(&lambda).map_err(|e| e.to_string())?;
        view.euler_residual = Some(grad.iter().zip(lambda.values()).map(|(d, l)| d * l).sum::<f64>() - f);
        view.gradient_ratio = Some(gradient_product(&spec, &lambda).map_err(|e| e.to_string())? / spec.gamma());
        view.f = Some(f);
        view.grad = Some(grad);
    }
    Ok(view)
}

#[derive(Debug, Serialize)]
pub struct ThetaView {
    pub n: usize,
    /// Eigenvalues of `g⁻¹ g̃`.
    pub lambda: Vec<f64>,
    pub in_cone: bool,
    /// Eigenvalues of `G` and `Θ` relative to `g`.
    pub g_coeff_eigs: Vec<f64>,
    pub theta_eigs: Vec<f64>,
    pub report: Option<Lemma1Report>,
}

/// A random `(g, g_h, H)` triple drawn from `seed`, with `H` scaled by `scale`.
pub fn theta_view(descriptor: &str, n: usize, seed: u64, scale: f64) -> Result<ThetaView, String> {
    let op: OperatorDescriptor = descriptor.parse().map_err(|e| format!("{e}"))?;
    let spec = op.build(n).map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let g = random_metric(&mut r, n, 0.2);
    let g_h = random_metric(&mut r, n, 0.2);
    let hessian = random_hermitian(&mut r, n).scale(scale);
    let gt = tilde_from_hessian(&g, &g_h, &hessian).map_err(|e| e.to_string())?;
    let lambda = endomorphism_eigs(&g, &gt).map_err(|e| e.to_string())?;
    let mut view = ThetaView {
        n,
        lambda: lambda.values().to_vec(),
        in_cone: spec.cone().check_interior(&lambda).is_ok(),
        g_coeff_eigs: Vec::new(),
        theta_eigs: Vec::new(),
        report: None,
    };
    if view.in_cone {
        let lin = linearize(&spec, &g, &gt).map_err(|e| e.to_string())?;
        let th = theta(&lin.g_coeff, &g).map_err(|e| e.to_string())?;
        let upper = |m: &c0_estimate::hermlin::HermitianMatrix| m.upper_in_frame(&g).map(|x| x.eigenvalues());
        view.g_coeff_eigs = upper(&lin.g_coeff).map_err(|e| e.to_string())?;
        view.theta_eigs = upper(&th).map_err(|e| e.to_string())?;
        view.report = Some(verify_lemma1(&spec, &g, &g_h, &gt, &hessian).map_err(|e| e.to_string())?);
    }
    Ok(view)
}

#[derive(Debug, Serialize)]
pub struct ComparisonView {
    pub k: u32,
    /// `(x, τ_k(x))` on `[−3/k, 2/k]`.
    pub tau: Vec<(f64, f64)>,
    pub epsilon: f64,
    /// `(r, ψ(r), −ε(−ψ)^{n/(n+1)})` for `ψ = c^{1/n}(r² − 1)` on the unit ball.
    pub barrier: Vec<(f64, f64, f64)>,
}

pub fn comparison_view(k: u32, a_sk: f64, gamma: f64, n: usize, c: f64, count: usize) -> Result<ComparisonView, String> {
    if k == 0 || count < 2 || !(c > 0.0) {
        return Err("need k >= 1, count >= 2 and c > 0".into());
    }
    let epsilon = epsilon_constant(a_sk, gamma, n).map_err(|e| e.to_string())?;
    let kf = k as f64;
    let step = |i: usize| i as f64 / (count - 1) as f64;
    let tau = (0..count)
        .map(|i| {
            let x = -3.0 / kf + 5.0 / kf * step(i);
            (x, tau_k(x, k))
        })
        .collect();
    let nf = n as f64;
    let barrier = (0..count)
        .map(|i| {
            let r = step(i);
            let psi = c.powf(1.0 / nf) * (r * r - 1.0);
            (r, psi, -epsilon * (-psi).powf(nf / (nf + 1.0)))
        })
        .collect();
    Ok(ComparisonView { k, tau, epsilon, barrier })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = operatorView)]
pub fn operator_view_js(descriptor: &str, lambda: Vec<f64>) -> Result<String, JsError> {
    to_json(operator_view(descriptor, &lambda))
}

#[wasm_bindgen(js_name = thetaView)]
pub fn theta_view_js(descriptor: &str, n: usize, seed: u32, scale: f64) -> Result<String, JsError> {
    to_json(theta_view(descriptor, n, seed as u64, scale))
}

#[wasm_bindgen(js_name = comparisonView)]
pub fn comparison_view_js(k: u32, a_sk: f64, gamma: f64, n: usize, c: f64, count: usize) -> Result<String, JsError> {
    to_json(comparison_view(k, a_sk, gamma, n, c, count))
}
