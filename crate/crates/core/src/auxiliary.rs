//! Local comparison machinery around the minimum point of a solution.
//!
//! A lattice ball `Ω = B(x0, 2r0)` carries the shifted sublevel function
//! `u_s = φ − φ(x0) + ε′|z|² − s`, a Dirichlet Monge-Ampère problem
//! `det(ψ_{ij̄}) = τ_k(−u_s) e^{nF} det g / A_{s,k}`, and the test function
//! `Φ = −ε(−ψ)^{n/(n+1)} − u_s` whose maximum is checked against a tolerance.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::grid::{complex_from_real_hessian, coefficients_from_upper, entropy_norm, pair_list, HermitianField, ScalarField, Stencil, TorusGrid, GHOST, OUTSIDE};
use crate::hermlin::{generalized_eigen, HermitianMatrix};
use crate::krylov::{bicgstab, jacobi};
use crate::solver::{PrimaryProblem, PrimarySolution};
use crate::{Error, Result};

/// Smallest ball radius, in grid steps, accepted for a chart.
pub const MIN_RADIUS_STEPS: usize = 4;
/// Default `C_disc` in `τ_disc = C_disc · h²`.
pub const DEFAULT_C_DISC: f64 = 10.0;

/// Lattice points `o ∈ Z^{2n}` with `|o| < m`, plus the exterior ring reached by the stencil.
///
/// Ring values are not unknowns: each stencil entry that leaves the ball reads
/// an extrapolated value that vanishes where the stencil line meets the sphere.
#[derive(Clone, Debug)]
pub struct Ball {
    n: usize,
    spacing: f64,
    steps: usize,
    offsets: Vec<Vec<i64>>,
    ring: Vec<Vec<i64>>,
    stencil: Stencil,
}

/// How stencil entries that leave the ball are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Exterior lattice values are zero.
    Zero,
    /// Linear extrapolation from the point to the sphere crossing along the stencil direction.
    Linear,
    /// Quadratic extrapolation through `p − e`, `p` and the sphere crossing.
    #[default]
    Quadratic,
}

impl Ball {
    pub fn new(n: usize, spacing: f64, steps: usize) -> Result<Self> {
        Self::with_rule(n, spacing, steps, BoundaryRule::default())
    }

    pub fn with_rule(n: usize, spacing: f64, steps: usize, rule: BoundaryRule) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if steps < 1 || !(spacing > 0.0) {
            return Err(Error::Argument(format!("bad ball: {steps} steps of size {spacing}")));
        }
        let d = 2 * n;
        let m = steps as i64;
        let side = (2 * m + 3) as usize;
        let box_len = side.pow(d as u32);
        let code = |o: &[i64]| o.iter().fold(0usize, |acc, &c| acc * side + (c + m + 1) as usize);
        let decode = |mut c: usize| {
            let mut o = vec![0i64; d];
            for a in (0..d).rev() {
                o[a] = (c % side) as i64 - m - 1;
                c /= side;
            }
            o
        };
        let norm2 = |o: &[i64]| o.iter().map(|c| c * c).sum::<i64>();
        let mut slot = vec![OUTSIDE; box_len];
        let mut offsets = Vec::new();
        for (c, s) in slot.iter_mut().enumerate() {
            let o = decode(c);
            if norm2(&o) < m * m {
                *s = offsets.len() as u32;
                offsets.push(o);
            }
        }
        let pairs = pair_list(d);
        let mut ring_slot = vec![false; box_len];
        let mut ring = Vec::new();
        let mut ghosts = Vec::new();
        let mut axis = Vec::with_capacity(offsets.len() * d * 2);
        let mut diag = Vec::with_capacity(offsets.len() * pairs.len() * 4);
        let mut visit = |p: usize, o: &[i64], e: &[i64], table: &mut Vec<u32>| {
            let q: Vec<i64> = o.iter().zip(e).map(|(a, b)| a + b).collect();
            let c = code(&q);
            if slot[c] != OUTSIDE {
                table.push(slot[c]);
                return;
            }
            if !ring_slot[c] {
                ring_slot[c] = true;
                ring.push(q);
            }
            // sphere crossing at p + θe, θ ∈ (0, 1]
            let ee = norm2(e) as f64;
            let oe: f64 = o.iter().zip(e).map(|(a, b)| (a * b) as f64).sum();
            let c0 = (norm2(o) - m * m) as f64;
            let theta = (-oe + (oe * oe - ee * c0).sqrt()) / ee;
            let back: Vec<i64> = o.iter().zip(e).map(|(a, b)| a - b).collect();
            let back_slot = if norm2(&back) < m * m { slot[code(&back)] } else { OUTSIDE };
            let ghost = match rule {
                BoundaryRule::Zero => None,
                BoundaryRule::Quadratic if back_slot != OUTSIDE => Some([
                    (p as u32, -2.0 * (1.0 - theta) / theta),
                    (back_slot, (1.0 - theta) / (1.0 + theta)),
                ]),
                _ => Some([(p as u32, 1.0 - 1.0 / theta), (p as u32, 0.0)]),
            };
            match ghost {
                Some(gh) => {
                    table.push(GHOST | ghosts.len() as u32);
                    ghosts.push(gh);
                }
                None => table.push(OUTSIDE),
            }
        };
        let mut e = vec![0i64; d];
        for (p, o) in offsets.iter().enumerate() {
            for a in 0..d {
                for sgn in [1, -1] {
                    e[a] = sgn;
                    visit(p, o, &e, &mut axis);
                    e[a] = 0;
                }
            }
            for &(a, b) in &pairs {
                for (sa, sb) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    e[a] = sa;
                    e[b] = sb;
                    visit(p, o, &e, &mut diag);
                    e[a] = 0;
                    e[b] = 0;
                }
            }
        }
        let stencil = Stencil::from_tables(d, spacing, axis, diag, ghosts);
        Ok(Self { n, spacing, steps, offsets, ring, stencil })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn radius(&self) -> f64 {
        self.steps as f64 * self.spacing
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn ring(&self) -> &[Vec<i64>] {
        &self.ring
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(2 * self.n as i32)
    }

    fn squared_length(&self, o: &[i64]) -> f64 {
        o.iter().map(|c| (c * c) as f64).sum::<f64>() * self.spacing * self.spacing
    }

    /// `|z|²` at each interior point.
    pub fn dist2(&self) -> Vec<f64> {
        self.offsets.iter().map(|o| self.squared_length(o)).collect()
    }

    pub fn ring_dist2(&self) -> Vec<f64> {
        self.ring.iter().map(|o| self.squared_length(o)).collect()
    }

    /// Torus indices of the interior and ring points around `center`.
    pub fn torus_indices(&self, grid: &TorusGrid, center: usize) -> (Vec<usize>, Vec<usize>) {
        let c = grid.coords(center);
        let map = |list: &[Vec<i64>]| list.iter().map(|o| grid.offset_index(&c, o)).collect();
        (map(&self.offsets), map(&self.ring))
    }

    pub fn complex_hessian_at(&self, psi: &[f64], i: usize) -> HermitianMatrix {
        let d = 2 * self.n;
        let mut real = vec![0.0; d * d];
        self.stencil.real_hessian(psi, i, &mut real);
        complex_from_real_hessian(self.n, &real)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalChart {
    /// Grid index of `x0`.
    pub center: usize,
    pub center_coords: Vec<usize>,
    pub r0: f64,
    /// Radius of `Ω`, equal to `2 r0`.
    pub radius: f64,
    pub radius_steps: usize,
    pub eps_prime: f64,
    /// Largest `ε′` with `g_h ≥ (2ε′/(n−1)) tr_g(g_h) g` on `Ω`.
    pub eps_prime_trace_bound: f64,
    /// Largest `ε′` with `g_h ≥ ε′ (tr(g⁻¹) g − I)/(n−1)` on `Ω`.
    pub eps_prime_euclidean_bound: f64,
    pub s0: f64,
    /// `−φ(x0)` for the sup-normalized potential.
    pub depth: f64,
    pub trivially_holds: bool,
}

/// Chart around the lowest-index minimum of `φ`.
pub fn build_chart(
    grid: &TorusGrid,
    phi: &ScalarField,
    g: &HermitianField,
    g_h: &HermitianField,
) -> Result<(LocalChart, Ball)> {
    phi.check_len(grid)?;
    g.check_len(grid)?;
    g_h.check_len(grid)?;
    let center = phi.argmin();
    let depth = phi.max() - phi.values[center];
    let max_steps = grid.points / 2;

    // Largest m such that every point with |o| < m has spectrum of g in [1/2, 2].
    let probe = Ball::new(grid.n, grid.spacing(), max_steps)?;
    let (probe_idx, _) = probe.torus_indices(grid, center);
    let mut steps = max_steps;
    for (o, &p) in probe.offsets().iter().zip(&probe_idx) {
        let ev = g.at(p).eigenvalues();
        if ev[0] < 0.5 || ev[ev.len() - 1] > 2.0 {
            let r = (o.iter().map(|c| c * c).sum::<i64>() as f64).sqrt();
            steps = steps.min(r.ceil() as usize);
            let r2 = o.iter().map(|c| c * c).sum::<i64>() as usize;
            while steps * steps > r2 {
                steps -= 1;
            }
        }
    }
    if steps < MIN_RADIUS_STEPS {
        return Err(Error::ChartFailure(format!(
            "metric leaves [1/2, 2] within {steps} grid steps of the minimum"
        )));
    }
    let ball = Ball::new(grid.n, grid.spacing(), steps)?;
    let (idx, _) = ball.torus_indices(grid, center);
    let n = grid.n as f64;
    let mut trace_bound = f64::INFINITY;
    let mut euclid_bound = f64::INFINITY;
    for &p in &idx {
        let gp = g.at(p);
        let ghp = g_h.at(p);
        let g_inv = gp.inverse_pd()?;
        let (rel, _) = generalized_eigen(&gp, &ghp)?;
        let t = g_inv.pair(&ghp);
        trace_bound = trace_bound.min((n - 1.0) * rel[0] / (2.0 * t));
        let m = gp
            .scale(g_inv.trace())
            .sub(&HermitianMatrix::identity(grid.n))
            .scale(1.0 / (n - 1.0));
        let (pencil, _) = generalized_eigen(&m, &ghp)?;
        euclid_bound = euclid_bound.min(pencil[0]);
    }
    let eps_prime = 0.5 * trace_bound.min(euclid_bound);
    let radius = ball.radius();
    let r0 = 0.5 * radius;
    let chart = LocalChart {
        center,
        center_coords: grid.coords(center),
        r0,
        radius,
        radius_steps: steps,
        eps_prime,
        eps_prime_trace_bound: trace_bound,
        eps_prime_euclidean_bound: euclid_bound,
        s0: 4.0 * eps_prime * r0 * r0,
        depth,
        trivially_holds: depth < 2.0,
    };
    Ok((chart, ball))
}

/// `u_s` on the interior and the exterior ring of `Ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sublevel {
    pub s: f64,
    pub inside: Vec<f64>,
    pub ring: Vec<f64>,
}

impl Sublevel {
    /// Membership in `Ω_s = {u_s < 0}`.
    pub fn in_omega_s(&self) -> Vec<bool> {
        self.inside.iter().map(|&u| u < 0.0).collect()
    }

    pub fn ring_min(&self) -> f64 {
        self.ring.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `u_s = φ − φ(x0) + ε′|z|² − s` on the chart ball.
pub fn build_us(grid: &TorusGrid, phi: &ScalarField, chart: &LocalChart, ball: &Ball, s: f64) -> Result<Sublevel> {
    if !(s > 0.0 && s < chart.s0) {
        return Err(Error::Argument(format!("s = {s} must lie in (0, {})", chart.s0)));
    }
    phi.check_len(grid)?;
    let base = phi.values[chart.center];
    let (idx, ring_idx) = ball.torus_indices(grid, chart.center);
    let eval = |list: &[usize], d2: Vec<f64>| {
        list.iter()
            .zip(d2)
            .map(|(&p, r2)| phi.values[p] - base + chart.eps_prime * r2 - s)
            .collect()
    };
    Ok(Sublevel {
        s,
        inside: eval(&idx, ball.dist2()),
        ring: eval(&ring_idx, ball.ring_dist2()),
    })
}

/// Smoothed positive part: `x + 1/k` for `x ≥ 0`, `1/(2k)` for `x ≤ −1/k`,
/// cubic Hermite bridge `(1 + t²)/(2k)`, `t = 1 + kx`, in between.
pub fn tau_k(x: f64, k: u32) -> f64 {
    assert!(k >= 1, "tau_k needs k >= 1");
    let kf = k as f64;
    if x >= 0.0 {
        x + 1.0 / kf
    } else if x <= -1.0 / kf {
        0.5 / kf
    } else {
        let t = 1.0 + kf * x;
        (1.0 + t * t) / (2.0 * kf)
    }
}

/// `A_{s,k} = Σ_Ω τ_k(−u_s) e^{nF} det g · h^{2n}`.
pub fn compute_ask(u: &[f64], forcing: &[f64], density: &[f64], k: u32, n: usize, cell_volume: f64) -> f64 {
    let nf = n as f64;
    u.iter()
        .zip(forcing)
        .zip(density)
        .map(|((&u, &f), &d)| tau_k(-u, k) * (nf * f).exp() * d)
        .sum::<f64>()
        * cell_volume
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryOptions {
    /// Target for `sup |log det ψ_{ij̄} − log rhs|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Eigenvalue floor used while iterating.
    pub clamp: f64,
    /// Allowed deviation of `Σ rhs · h^{2n}` from 1.
    pub mass_tolerance: f64,
}

impl Default for AuxiliaryOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 80,
            clamp: 1e-8,
            mass_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliarySolution {
    /// `ψ` on the interior points of the ball.
    pub psi: Vec<f64>,
    pub iterations: usize,
    pub residual_sup: f64,
    /// `Σ det ψ_{ij̄} · h^{2n}`.
    pub mass: f64,
    pub min_eigenvalue: f64,
    pub history: Vec<f64>,
}

struct AuxEval {
    residual: Vec<f64>,
    coefficients: Vec<f64>,
    clamped: usize,
    min_eigenvalue: f64,
}

fn aux_evaluate(ball: &Ball, psi: &[f64], log_rhs: &[f64], clamp: f64) -> AuxEval {
    let n = ball.n();
    let terms = ball.stencil().terms();
    let mut residual = Vec::with_capacity(psi.len());
    let mut coefficients = vec![0.0; psi.len() * terms];
    let mut clamped = 0;
    let mut min_eigenvalue = f64::INFINITY;
    for i in 0..psi.len() {
        let h = ball.complex_hessian_at(psi, i);
        let (mu, u) = h.eigen();
        min_eigenvalue = min_eigenvalue.min(mu[0]);
        let mut log_det = 0.0;
        let mut inv = u.clone();
        for (j, &m) in mu.iter().enumerate() {
            let m = if m < clamp {
                clamped += 1;
                clamp
            } else {
                m
            };
            log_det += m.ln();
            for r in 0..n {
                inv[(r, j)] /= num_complex::Complex64::new(m, 0.0);
            }
        }
        residual.push(log_det - log_rhs[i]);
        let theta = HermitianMatrix::from_matrix_unchecked(inv * u.adjoint()).symmetrized();
        coefficients_from_upper(&theta, &mut coefficients[i * terms..(i + 1) * terms]);
    }
    AuxEval { residual, coefficients, clamped, min_eigenvalue }
}

/// Damped Newton for `det ψ_{ij̄} = rhs` on the ball with `ψ = 0` on the bounding sphere.
pub fn solve_auxiliary_ma(ball: &Ball, rhs: &[f64], options: &AuxiliaryOptions) -> Result<AuxiliarySolution> {
    if rhs.len() != ball.len() {
        return Err(Error::DimensionMismatch { expected: ball.len(), got: rhs.len() });
    }
    if let Some(i) = rhs.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Argument(format!("right-hand side must be positive, got {} at {i}", rhs[i])));
    }
    let dv = ball.cell_volume();
    let mass_in = rhs.iter().sum::<f64>() * dv;
    if (mass_in - 1.0).abs() > options.mass_tolerance {
        return Err(Error::InconsistentInput(format!("right-hand side has mass {mass_in}, expected 1")));
    }
    let n = ball.n() as f64;
    let log_rhs: Vec<f64> = rhs.iter().map(|v| v.ln()).collect();
    let c = rhs.iter().sum::<f64>() / rhs.len() as f64;
    let r2 = ball.radius().powi(2);
    let mut psi: Vec<f64> = ball.dist2().iter().map(|d| c.powf(1.0 / n) * (d - r2)).collect();

    let stencil = ball.stencil();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut eval = aux_evaluate(ball, &psi, &log_rhs, options.clamp);
    let mut history = vec![sup(&eval.residual)];
    let mut iterations = 0;
    loop {
        let res_sup = sup(&eval.residual);
        if res_sup <= options.tolerance && eval.clamped == 0 {
            break;
        }
        if iterations >= options.max_iterations {
            return Err(aux_failure(&eval, iterations, history));
        }
        iterations += 1;
        let diagonal = stencil.diagonal(&eval.coefficients);
        let rhs_lin: Vec<f64> = eval.residual.iter().map(|r| -r).collect();
        let mut delta = vec![0.0; psi.len()];
        let rtol = (0.1 * res_sup).clamp(1e-12, 1e-2);
        bicgstab(
            |x, y| stencil.apply(&eval.coefficients, x, y),
            jacobi(&diagonal),
            &rhs_lin,
            &mut delta,
            rtol,
            2000,
        );
        let base = rms(&eval.residual);
        let mut step = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = psi.iter().zip(&delta).map(|(p, d)| p + step * d).collect();
            let next = aux_evaluate(ball, &trial, &log_rhs, options.clamp);
            if rms(&next.residual) <= (1.0 - 1e-4 * step) * base {
                break Some((trial, next));
            }
            step *= 0.5;
            if step < crate::solver::MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((trial, next)) => {
                psi = trial;
                eval = next;
                history.push(sup(&eval.residual));
            }
            None => return Err(aux_failure(&eval, iterations, history)),
        }
    }
    let mass = (0..psi.len())
        .map(|i| ball.complex_hessian_at(&psi, i).determinant())
        .sum::<f64>()
        * dv;
    Ok(AuxiliarySolution {
        psi,
        iterations,
        residual_sup: sup(&eval.residual),
        mass,
        min_eigenvalue: eval.min_eigenvalue,
        history,
    })
}

fn aux_failure(eval: &AuxEval, iterations: usize, history: Vec<f64>) -> Error {
    if eval.clamped > 0 {
        Error::Degeneracy(format!(
            "{} eigenvalues below the floor after {iterations} iterations (min {:.3e})",
            eval.clamped, eval.min_eigenvalue
        ))
    } else {
        Error::NonConvergence {
            iterations,
            last: history.last().copied().unwrap_or(f64::NAN),
            history,
        }
    }
}

/// `ε = (A γ⁻¹ (n+1)^n / n^{2n})^{1/(n+1)}`.
pub fn epsilon_constant(a_sk: f64, gamma: f64, n: usize) -> Result<f64> {
    if !(a_sk > 0.0) || !(gamma > 0.0) {
        return Err(Error::Argument(format!("need A > 0 and gamma > 0, got {a_sk}, {gamma}")));
    }
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let nf = n as f64;
    let value = a_sk / gamma * (nf + 1.0).powi(n as i32) / nf.powi(2 * n as i32);
    Ok(value.powf(1.0 / (nf + 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    /// Index into the interior point list.
    pub ball_index: usize,
    pub offset: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torus_index: Option<usize>,
    pub in_omega_s: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    /// Quantiles of `−Φ` over the interior points.
    pub min: f64,
    pub p10: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primary: Option<f64>,
    pub auxiliary: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub s: f64,
    pub k: u32,
    #[serde(rename = "A_sk")]
    pub a_sk: f64,
    pub epsilon: f64,
    pub max_phi: f64,
    pub location: Location,
    pub pass: bool,
    pub mass_error: f64,
    pub residuals: Residuals,
    pub tau_disc: f64,
    pub max_outside_omega_s: bool,
    pub margin: MarginSummary,
    /// Largest value of `ψ`; nonpositive up to rounding.
    pub psi_max: f64,
    pub ring_min_u: f64,
    /// Smallest multiplier `t` for which `−t ε(−ψ)^{n/(n+1)} − u_s ≤ 0` on `Ω_s`.
    pub critical_scale: f64,
}

/// Evaluates `Φ = −ε(−ψ)^{n/(n+1)} − u_s` at the interior points of the ball.
pub fn check_comparison(
    ball: &Ball,
    sublevel: &Sublevel,
    aux: &AuxiliarySolution,
    epsilon: f64,
    tau_disc: f64,
) -> (f64, Location, MarginSummary, bool) {
    let n = ball.n() as f64;
    let power = n / (n + 1.0);
    let mut best = f64::NEG_INFINITY;
    let mut at = 0;
    let mut margins = Vec::with_capacity(ball.len());
    for (i, (&psi, &u)) in aux.psi.iter().zip(&sublevel.inside).enumerate() {
        let v = -epsilon * (-psi).max(0.0).powf(power) - u;
        margins.push(-v);
        if v > best {
            best = v;
            at = i;
        }
    }
    margins.sort_by(f64::total_cmp);
    let q = |f: f64| margins[((margins.len() - 1) as f64 * f).round() as usize];
    let summary = MarginSummary { min: q(0.0), p10: q(0.1), median: q(0.5), max: q(1.0) };
    let location = Location {
        ball_index: at,
        offset: ball.offsets()[at].clone(),
        torus_index: None,
        in_omega_s: sublevel.inside[at] < 0.0,
    };
    (best, location, summary, best <= tau_disc)
}

/// `max_{Ω_s} (−u_s) / (ε(−ψ)^{n/(n+1)})`.
pub fn critical_scale(sublevel: &Sublevel, aux: &AuxiliarySolution, epsilon: f64, n: usize) -> f64 {
    let power = n as f64 / (n as f64 + 1.0);
    sublevel
        .inside
        .iter()
        .zip(&aux.psi)
        .filter(|(&u, _)| u < 0.0)
        .map(|(&u, &psi)| -u / (epsilon * (-psi).max(0.0).powf(power)))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub c_disc: f64,
    /// Entropy exponent `p > n`.
    pub entropy_p: f64,
    /// Multiplier applied to `ε` (1 for the comparison itself).
    pub epsilon_scale: f64,
    pub auxiliary: AuxiliaryOptions,
    pub workers: usize,
}

impl PipelineOptions {
    pub fn for_dimension(n: usize) -> Self {
        Self {
            c_disc: DEFAULT_C_DISC,
            entropy_p: n as f64 + 1.0,
            epsilon_scale: 1.0,
            auxiliary: AuxiliaryOptions::default(),
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineEntry {
    pub s_fraction: f64,
    pub k: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub chart: LocalChart,
    pub depth: f64,
    pub entropy_norm: f64,
    pub entropy_p: f64,
    pub gamma: f64,
    pub primary_residual: f64,
    pub entries: Vec<PipelineEntry>,
    pub all_pass: bool,
}

/// Solves one auxiliary problem and checks the comparison for it.
#[allow(clippy::too_many_arguments)]
pub fn compare_one(
    grid: &TorusGrid,
    phi: &ScalarField,
    forcing_eff: &ScalarField,
    density: &ScalarField,
    chart: &LocalChart,
    ball: &Ball,
    gamma: f64,
    s: f64,
    k: u32,
    options: &PipelineOptions,
) -> Result<ComparisonReport> {
    let sub = build_us(grid, phi, chart, ball, s)?;
    let (idx, _) = ball.torus_indices(grid, chart.center);
    let f_loc: Vec<f64> = idx.iter().map(|&p| forcing_eff.values[p]).collect();
    let d_loc: Vec<f64> = idx.iter().map(|&p| density.values[p]).collect();
    let n = grid.n;
    let dv = ball.cell_volume();
    let a = compute_ask(&sub.inside, &f_loc, &d_loc, k, n, dv);
    let rhs: Vec<f64> = (0..ball.len())
        .map(|i| tau_k(-sub.inside[i], k) * (n as f64 * f_loc[i]).exp() * d_loc[i] / a)
        .collect();
    let aux = solve_auxiliary_ma(ball, &rhs, &options.auxiliary)?;
    let epsilon = epsilon_constant(a, gamma, n)?;
    let tau_disc = options.c_disc * grid.spacing().powi(2);
    let (max_phi, mut location, margin, pass) =
        check_comparison(ball, &sub, &aux, options.epsilon_scale * epsilon, tau_disc);
    let c = grid.coords(chart.center);
    location.torus_index = Some(grid.offset_index(&c, &location.offset));
    Ok(ComparisonReport {
        s,
        k,
        a_sk: a,
        epsilon,
        max_phi,
        max_outside_omega_s: !location.in_omega_s,
        location,
        pass,
        mass_error: (aux.mass - 1.0).abs(),
        residuals: Residuals { primary: None, auxiliary: aux.residual_sup },
        tau_disc,
        margin,
        psi_max: aux.psi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ring_min_u: sub.ring_min(),
        critical_scale: critical_scale(&sub, &aux, epsilon, n),
    })
}

/// Chart, sublevel sets, auxiliary solves and comparison checks for every `(s, k)`.
///
/// `s_fractions` are multiples of the chart's `s0`; failures of single pairs are
/// recorded in their entries.
pub fn run_local_pipeline(
    solution: &PrimarySolution,
    problem: &PrimaryProblem,
    s_fractions: &[f64],
    k_list: &[u32],
    options: &PipelineOptions,
) -> Result<LocalReport> {
    let grid = &problem.grid;
    let (chart, ball) = build_chart(grid, &solution.phi, &problem.g, &problem.g_h)?;
    let forcing_eff = problem.forcing.shifted(solution.b);
    let density = crate::grid::volume_density(&problem.g);
    let gamma = problem.spec.gamma();
    let jobs: Vec<(f64, u32)> = s_fractions
        .iter()
        .flat_map(|&f| k_list.iter().map(move |&k| (f, k)))
        .collect();
    let run = |&(frac, k): &(f64, u32)| {
        let result = compare_one(
            grid,
            &solution.phi,
            &forcing_eff,
            &density,
            &chart,
            &ball,
            gamma,
            frac * chart.s0,
            k,
            options,
        );
        match result {
            Ok(mut report) => {
                report.residuals.primary = Some(solution.residual_sup);
                PipelineEntry { s_fraction: frac, k, report: Some(report), error: None }
            }
            Err(e) => PipelineEntry { s_fraction: frac, k, report: None, error: Some(e.to_string()) },
        }
    };
    let entries = run_parallel(&jobs, options.workers, run);
    let all_pass = entries.iter().all(|e| e.report.as_ref().is_some_and(|r| r.pass));
    Ok(LocalReport {
        depth: chart.depth,
        entropy_norm: entropy_norm(grid, &problem.forcing, &problem.g, options.entropy_p)?,
        entropy_p: options.entropy_p,
        gamma,
        primary_residual: solution.residual_sup,
        chart,
        entries,
        all_pass,
    })
}

/// Maps `f` over `jobs` on up to `workers` scoped threads, preserving order.
pub fn run_parallel<J: Sync, T: Send>(jobs: &[J], workers: usize, f: impl Fn(&J) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(f).collect();
    }
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<T>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = {
                    let mut guard = next.lock().expect("job counter");
                    let i = *guard;
                    *guard += 1;
                    i
                };
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}
