//! Pointwise property suites for one operator.

use c0_estimate::hermlin::{endomorphism_eigs, tilde_from_hessian, verify_lemma1};
use c0_estimate::sampling::{random_hermitian, random_metric, rng, ConeSampler};
use c0_estimate::symfun::{gradient_product, OperatorSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

const REJECTION_LIMIT: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub samples: usize,
    /// Worst value of the suite's statistic.
    pub worst: f64,
    pub threshold: f64,
    pub failures: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub operator: String,
    pub n: usize,
    pub seed: u64,
    pub gamma: f64,
    pub gamma_certified: bool,
    pub suites: Vec<SuiteResult>,
    /// Smallest `(det Θ − γ/f^n) / (γ/f^n)` over the Θ draws.
    pub min_relative_slack: f64,
    pub pass: bool,
}

fn suite(name: &str, samples: usize, worst: f64, threshold: f64, failures: usize) -> SuiteResult {
    SuiteResult { name: name.into(), samples, worst, threshold, failures, pass: failures == 0 }
}

pub fn run_pointwise(spec: &OperatorSpec, label: &str, samples: usize, seed: u64) -> anyhow::Result<PointwiseReport> {
    let n = spec.n();
    let gamma = spec.gamma();
    let mut sampler = ConeSampler::new(spec.cone().clone(), n, seed);

    let (mut euler, mut homog, mut structural) = (0.0f64, 0.0f64, f64::INFINITY);
    let (mut euler_bad, mut homog_bad, mut structural_bad) = (0, 0, 0);
    for _ in 0..samples {
        let lambda = sampler.sample()?;
        let (f, grad) = spec.eval_grad(&lambda)?;
        let e = (grad.iter().zip(lambda.values()).map(|(d, l)| d * l).sum::<f64>() - f).abs() / f;
        let t = sampler.rng().gen_range(0.1..10.0);
        let h = (spec.eval(&lambda.scaled(t))? - t * f).abs() / (t * f);
        let ratio = gradient_product(spec, &lambda)? / gamma;
        euler_bad += usize::from(e > 1e-10);
        homog_bad += usize::from(h > 1e-10);
        structural_bad += usize::from(ratio < 1.0 - 1e-9);
        euler = euler.max(e);
        homog = homog.max(h);
        structural = structural.min(ratio);
    }

    let mut r = rng(seed ^ 0x5eed);
    let (mut res_a, mut trace, mut slack, mut rel, mut pd) = (0.0f64, 0.0f64, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut a_bad, mut trace_bad, mut slack_bad, mut pd_bad) = (0, 0, 0, 0);
    let mut drawn = 0;
    let mut rejected = 0;
    while drawn < samples {
        let g = random_metric(&mut r, n, 0.2);
        let g_h = random_metric(&mut r, n, 0.2);
        let hessian = random_hermitian(&mut r, n).scale(0.5);
        let gt = tilde_from_hessian(&g, &g_h, &hessian)?;
        let lambda = endomorphism_eigs(&g, &gt)?;
        if spec.cone().check_interior(&lambda).is_err() {
            rejected += 1;
            anyhow::ensure!(rejected < REJECTION_LIMIT * samples, "Θ suite rejected too many draws");
            continue;
        }
        let report = verify_lemma1(spec, &g, &g_h, &gt, &hessian)?;
        a_bad += usize::from(report.residual_a > 1e-9);
        trace_bad += usize::from(report.trace_identity_residual > 1e-10);
        slack_bad += usize::from(report.slack_b < -1e-12);
        pd_bad += usize::from(report.pd_b <= 0.0 || report.frame_defect > 1e-9);
        res_a = res_a.max(report.residual_a);
        trace = trace.max(report.trace_identity_residual);
        slack = slack.min(report.slack_b);
        rel = rel.min(report.slack_b / report.gamma_over_fn);
        pd = pd.min(report.pd_b);
        drawn += 1;
    }

    let suites = vec![
        suite("euler", samples, euler, 1e-10, euler_bad),
        suite("homogeneity", samples, homog, 1e-10, homog_bad),
        suite("structural_constant", samples, structural, 1.0 - 1e-9, structural_bad),
        suite("theta_identity", samples, res_a, 1e-9, a_bad),
        suite("trace_identity", samples, trace, 1e-10, trace_bad),
        suite("theta_positive", samples, pd, 0.0, pd_bad),
        suite("determinant_chain", samples, slack, -1e-12, slack_bad),
    ];
    let bound = spec.gamma_bound();
    Ok(PointwiseReport {
        operator: label.to_string(),
        n,
        seed,
        gamma,
        gamma_certified: bound.certified,
        pass: suites.iter().all(|s| s.pass),
        suites,
        min_relative_slack: rel,
    })
}
