//! Newton solver for `f(λ[g⁻¹ g̃_φ]) = e^{F+b}` on the torus.
//!
//! Unknowns are `φ` (zero mean during iteration) and the constant `b`. The
//! residual is `log f(λ) − F − b`; its linearization in `φ` is
//! `tr(Θ · i∂∂̄δφ)` with `Θ` built from the linearization coefficients `G`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::generators::{manufactured_forcing, with_point, MetricGenerator, TrigField};
use crate::grid::{coefficients_from_upper, integrate, volume_density, HermitianField, ScalarField, Stencil, TorusGrid};
use crate::hermlin::{generalized_eigen, HermitianMatrix};
use crate::krylov::{bicgstab, SpectralInverse};
use crate::symfun::{EigenTuple, OperatorSpec};
use crate::{Error, Result};

/// Smallest accepted line-search step.
pub const MIN_STEP: f64 = 1.0 / (1u64 << 20) as f64;
const ARMIJO: f64 = 1e-4;
const KRYLOV_MAX_ITERATIONS: usize = 400;

#[derive(Clone, Debug)]
pub struct PrimaryProblem {
    pub spec: OperatorSpec,
    pub grid: TorusGrid,
    pub g: HermitianField,
    pub g_h: HermitianField,
    pub forcing: ScalarField,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl PrimaryProblem {
    pub fn new(
        spec: OperatorSpec,
        grid: TorusGrid,
        g: HermitianField,
        g_h: HermitianField,
        forcing: ScalarField,
    ) -> Result<Self> {
        if spec.n() != grid.n {
            return Err(Error::DimensionMismatch { expected: grid.n, got: spec.n() });
        }
        g.check_len(&grid)?;
        g_h.check_len(&grid)?;
        forcing.check_len(&grid)?;
        for field in [&g, &g_h] {
            if let Some(p) = field.first_non_positive() {
                let pivot = field.at(p).min_eigenvalue();
                return Err(Error::MetricDegeneracy { pivot });
            }
        }
        if forcing.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("forcing has non-finite values".into()));
        }
        Ok(Self {
            spec,
            grid,
            g,
            g_h,
            forcing,
            tolerance: 1e-8,
            max_iterations: 50,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }
}

/// A problem whose forcing is computed from a known smooth potential.
#[derive(Clone, Debug)]
pub struct Manufactured {
    pub problem: PrimaryProblem,
    /// Exact potential, sup-normalized.
    pub exact: ScalarField,
    pub b: f64,
}

impl Manufactured {
    pub fn new(
        spec: OperatorSpec,
        grid: TorusGrid,
        g: &MetricGenerator,
        g_h: &MetricGenerator,
        potential: &TrigField,
        b: f64,
    ) -> Result<Self> {
        let g = g.field(&grid)?;
        let g_h = g_h.field(&grid)?;
        let forcing = manufactured_forcing(&spec, &grid, &g, &g_h, potential, b)?;
        let exact = crate::grid::normalize_sup(&potential.sample(&grid));
        let problem = PrimaryProblem::new(spec, grid, g, g_h, forcing)?;
        Ok(Self { problem, exact, b })
    }

    /// Monge-Ampère on the unit torus with wave metrics and a cosine potential.
    pub fn standard(n: usize, points: usize, amplitude: f64) -> Result<Self> {
        Self::new(
            OperatorSpec::monge_ampere(n)?,
            TorusGrid::new(n, points, 1.0)?,
            &MetricGenerator::Wave { amplitude: 0.2, mode: 1, phase: 0.0 },
            &MetricGenerator::Wave { amplitude: 0.3, mode: 1, phase: 1.0 },
            &TrigField::manufactured(n, amplitude),
            0.3,
        )
    }

    pub fn sup_error(&self, phi: &ScalarField) -> f64 {
        phi.values
            .iter()
            .zip(&self.exact.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub step: f64,
    pub krylov_iterations: usize,
    pub krylov_residual: f64,
}

#[derive(Clone, Debug)]
pub struct PrimarySolution {
    /// Sup-normalized potential.
    pub phi: ScalarField,
    pub b: f64,
    pub residual_sup: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl PrimarySolution {
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,residual_sup,residual_l2,step,krylov_iterations,krylov_residual")?;
        for r in &self.history {
            writeln!(
                out,
                "{},{:.6e},{:.6e},{:.6e},{},{:.3e}",
                r.iteration, r.residual_sup, r.residual_l2, r.step, r.krylov_iterations, r.krylov_residual
            )?;
        }
        Ok(())
    }
}

/// Per-point matrices reused across evaluations.
struct Context<'a> {
    problem: &'a PrimaryProblem,
    stencil: Stencil,
    g: Vec<HermitianMatrix>,
    g_inv: Vec<HermitianMatrix>,
    g_h: Vec<HermitianMatrix>,
}

struct Evaluation {
    residual: Vec<f64>,
    coefficients: Option<Vec<f64>>,
}

impl<'a> Context<'a> {
    fn new(problem: &'a PrimaryProblem) -> Result<Self> {
        let len = problem.grid.len();
        let g: Vec<_> = (0..len).map(|p| problem.g.at(p)).collect();
        let g_inv = g.iter().map(|m| m.inverse_pd()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            problem,
            stencil: problem.grid.stencil(),
            g,
            g_inv,
            g_h: (0..len).map(|p| problem.g_h.at(p)).collect(),
        })
    }

    fn n(&self) -> usize {
        self.problem.grid.n
    }

    fn tilde(&self, phi: &[f64], p: usize) -> HermitianMatrix {
        let n = self.n();
        let hess = self.stencil.complex_hessian_at(n, phi, p);
        let lap = self.g_inv[p].pair(&hess);
        self.g_h[p]
            .add(&self.g[p].scale(lap).sub(&hess).scale(1.0 / (n - 1) as f64))
            .symmetrized()
    }

    fn eigen_at(&self, phi: &[f64], p: usize) -> Result<(EigenTuple, nalgebra::DMatrix<num_complex::Complex64>)> {
        let (values, e) = generalized_eigen(&self.g[p], &self.tilde(phi, p))?;
        Ok((EigenTuple::new(values)?, e))
    }

    fn evaluate(&self, phi: &[f64], b: f64, with_coefficients: bool) -> Result<Evaluation> {
        let spec = &self.problem.spec;
        let len = phi.len();
        let n = self.n();
        let terms = self.stencil.terms();
        let mut residual = Vec::with_capacity(len);
        let mut coefficients = with_coefficients.then(|| vec![0.0; len * terms]);
        for p in 0..len {
            let (lambda, e) = self.eigen_at(phi, p)?;
            if let Some(coeffs) = coefficients.as_mut() {
                let (f, grad) = spec.eval_grad(&lambda).map_err(|err| with_point(err, p))?;
                residual.push(f.ln() - self.problem.forcing.values[p] - b);
                let theta = self.theta_at(p, &e, &grad, f);
                coefficients_from_upper(&theta, &mut coeffs[p * terms..(p + 1) * terms]);
            } else {
                let f = spec.eval(&lambda).map_err(|err| with_point(err, p))?;
                residual.push(f.ln() - self.problem.forcing.values[p] - b);
            }
            debug_assert_eq!(lambda.n(), n);
        }
        Ok(Evaluation { residual, coefficients })
    }

    /// `Θ = (tr(G g) g⁻¹ − G)/(n − 1)` with `G = Σ (∂_j f / f) e_j e_j^*`.
    fn theta_at(
        &self,
        p: usize,
        e: &nalgebra::DMatrix<num_complex::Complex64>,
        grad: &[f64],
        f: f64,
    ) -> HermitianMatrix {
        let n = self.n();
        let mut scaled = e.clone();
        for (j, gj) in grad.iter().enumerate() {
            let w = num_complex::Complex64::new(gj / f, 0.0);
            for r in 0..n {
                scaled[(r, j)] *= w;
            }
        }
        let g_coeff = HermitianMatrix::from_matrix_unchecked(scaled * e.adjoint()).symmetrized();
        let t = g_coeff.pair(&self.g[p]);
        self.g_inv[p]
            .scale(t)
            .sub(&g_coeff)
            .scale(1.0 / (n - 1) as f64)
            .symmetrized()
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pointwise `log f(λ[h_φ]) − F − b`.
pub fn residual(problem: &PrimaryProblem, phi: &ScalarField, b: f64) -> Result<ScalarField> {
    phi.check_len(&problem.grid)?;
    let ctx = Context::new(problem)?;
    Ok(ScalarField::new(ctx.evaluate(&phi.values, b, false)?.residual))
}

/// Newton linearization applied to `(δφ, δb)`: `tr(Θ · i∂∂̄δφ) − δb`.
pub fn jacobian_apply(
    problem: &PrimaryProblem,
    phi: &ScalarField,
    dphi: &ScalarField,
    db: f64,
) -> Result<ScalarField> {
    phi.check_len(&problem.grid)?;
    dphi.check_len(&problem.grid)?;
    let ctx = Context::new(problem)?;
    let eval = ctx.evaluate(&phi.values, 0.0, true)?;
    let coeffs = eval.coefficients.expect("requested");
    let mut out = vec![0.0; phi.len()];
    ctx.stencil.apply(&coeffs, &dphi.values, &mut out);
    out.iter_mut().for_each(|v| *v -= db);
    Ok(ScalarField::new(out))
}

/// Damped Newton iteration on `(φ, b)` from `initial` (default zero).
pub fn solve_primary(problem: &PrimaryProblem, initial: Option<&ScalarField>) -> Result<PrimarySolution> {
    let grid = &problem.grid;
    let len = grid.len();
    let ctx = Context::new(problem)?;
    let mut phi = match initial {
        Some(f) => {
            f.check_len(grid)?;
            f.values.clone()
        }
        None => vec![0.0; len],
    };
    let m0 = mean(&phi);
    phi.iter_mut().for_each(|v| *v -= m0);

    let start = ctx.evaluate(&phi, 0.0, true).map_err(|e| match e {
        Error::ConeViolation { point: Some(point), .. } => Error::InfeasibleStart { point },
        other => other,
    })?;
    let mut b = mean(&start.residual);
    let mut eval = Evaluation {
        residual: start.residual.iter().map(|r| r - b).collect(),
        coefficients: start.coefficients,
    };
    let mut history = Vec::new();
    let mut record = |it: usize, res: &[f64], step: f64, kit: usize, kres: f64| {
        history.push(IterationRecord {
            iteration: it,
            residual_sup: sup(res),
            residual_l2: l2(res),
            step,
            krylov_iterations: kit,
            krylov_residual: kres,
        });
    };
    record(0, &eval.residual, 0.0, 0, 0.0);

    let mut iteration = 0;
    loop {
        let res_sup = sup(&eval.residual);
        if res_sup <= problem.tolerance {
            break;
        }
        if iteration >= problem.max_iterations {
            return Err(Error::NonConvergence {
                iterations: iteration,
                last: res_sup,
                history: history.iter().map(|r| r.residual_sup).collect(),
            });
        }
        iteration += 1;

        let coeffs = eval.coefficients.take().expect("coefficients of accepted iterate");
        let (dphi, db, kout) = newton_direction(&ctx, &coeffs, &eval.residual, res_sup);

        let base_norm = l2(&eval.residual);
        let mut step = 1.0;
        let mut last_cone_point = None;
        let accepted = loop {
            let trial: Vec<f64> = phi.iter().zip(&dphi).map(|(p, d)| p + step * d).collect();
            let trial_b = b + step * db;
            match ctx.evaluate(&trial, trial_b, true) {
                Ok(next) if l2(&next.residual) <= (1.0 - ARMIJO * step) * base_norm => {
                    break Some((trial, trial_b, next));
                }
                Ok(_) => {}
                Err(Error::ConeViolation { point, .. }) => last_cone_point = point,
                Err(Error::DegeneratePoint { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((trial, trial_b, next)) => {
                phi = trial;
                b = trial_b;
                eval = next;
                record(iteration, &eval.residual, step, kout.iterations, kout.relative_residual);
            }
            None => {
                if let Some(point) = last_cone_point {
                    return Err(Error::InfeasibleStart { point });
                }
                return Err(Error::NonConvergence {
                    iterations: iteration,
                    last: res_sup,
                    history: history.iter().map(|r| r.residual_sup).collect(),
                });
            }
        }
    }
    let residual_sup = sup(&eval.residual);
    let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PrimarySolution {
        phi: ScalarField::new(phi.iter().map(|v| v - max).collect()),
        b,
        residual_sup,
        iterations: iteration,
        history,
    })
}

/// Solves the bordered system `L δφ − δb = −R`, `mean(δφ) = 0`.
fn newton_direction(
    ctx: &Context,
    coeffs: &[f64],
    residual: &[f64],
    res_sup: f64,
) -> (Vec<f64>, f64, crate::krylov::KrylovOutcome) {
    let grid = &ctx.problem.grid;
    let len = grid.len();
    let terms = ctx.stencil.terms();
    let mut average = vec![0.0; terms];
    for p in 0..len {
        for (a, c) in average.iter_mut().zip(&coeffs[p * terms..(p + 1) * terms]) {
            *a += c;
        }
    }
    average.iter_mut().for_each(|a| *a /= len as f64);
    let spectral = SpectralInverse::new(grid, &average);

    let apply = |x: &[f64], y: &mut [f64]| {
        ctx.stencil.apply(coeffs, &x[..len], &mut y[..len]);
        let xb = x[len];
        y[..len].iter_mut().for_each(|v| *v -= xb);
        y[len] = mean(&x[..len]);
    };
    let precondition = |r: &[f64], z: &mut [f64]| {
        let rm = mean(&r[..len]);
        spectral.solve(&r[..len], &mut z[..len]);
        let rb = r[len];
        z[..len].iter_mut().for_each(|v| *v += rb);
        z[len] = -rm;
    };
    let mut rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
    rhs.push(0.0);
    let mut x = vec![0.0; len + 1];
    let rtol = (0.1 * res_sup).clamp(1e-13, 1e-2);
    let out = bicgstab(apply, precondition, &rhs, &mut x, rtol, KRYLOV_MAX_ITERATIONS);
    let db = x.pop().expect("bordered unknown");
    (x, db, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    /// `C′ = sup tr(g⁻¹ g_h)`.
    pub c_prime: f64,
    /// `min (Δφ + C′)`.
    pub laplacian_margin: f64,
    pub laplacian_ok: bool,
    /// `min tr(g⁻¹(g + i∂∂̄(nφ/C′)))`.
    pub rescaled_min_trace: f64,
    pub rescaled_ok: bool,
    /// `∫(−φ) dV`.
    pub l1_norm: f64,
    pub pass: bool,
}

/// Laplacian lower bound and rescaled trace check behind the `L¹` estimate.
pub fn l1_bound_check(
    grid: &TorusGrid,
    phi: &ScalarField,
    g: &HermitianField,
    g_h: &HermitianField,
) -> Result<L1Report> {
    phi.check_len(grid)?;
    g.check_len(grid)?;
    g_h.check_len(grid)?;
    let n = grid.n as f64;
    let stencil = grid.stencil();
    let mut traces = Vec::with_capacity(grid.len());
    let mut laps = Vec::with_capacity(grid.len());
    for p in 0..grid.len() {
        let g_inv = g.at(p).inverse_pd()?;
        let t = g_inv.pair(&g_h.at(p));
        let lap = g_inv.pair(&stencil.complex_hessian_at(grid.n, &phi.values, p));
        if !(t + lap > 0.0) {
            return Err(Error::ConeViolation {
                cone: "Gamma_1".into(),
                test: format!("trace = {:e}", t + lap),
                point: Some(p),
            });
        }
        traces.push(t);
        laps.push(lap);
    }
    let c_prime = traces.iter().copied().fold(0.0, f64::max);
    let laplacian_margin = laps.iter().map(|l| l + c_prime).fold(f64::INFINITY, f64::min);
    let rescaled_min_trace = laps.iter().map(|l| n + n / c_prime * l).fold(f64::INFINITY, f64::min);
    let density = volume_density(g);
    let l1_norm = integrate(grid, &phi.map(|v| -v), &density);
    let laplacian_ok = laplacian_margin >= -1e-9;
    let rescaled_ok = rescaled_min_trace >= -1e-9;
    Ok(L1Report {
        c_prime,
        laplacian_margin,
        laplacian_ok,
        rescaled_min_trace,
        rescaled_ok,
        l1_norm,
        pass: laplacian_ok && rescaled_ok,
    })
}
