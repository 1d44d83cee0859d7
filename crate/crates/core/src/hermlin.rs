//! Pointwise Hermitian linear algebra for the relative endomorphism `g⁻¹ g̃`,
//! the linearization `G` of `log f` and the tensor `Θ`.
//!
//! All index pairings are matrix traces `tr(A B)` in one fixed frame. Lower-index
//! forms (`g`, `g_h`, `g̃`, complex Hessians) transform as `P^* A P`, upper-index
//! tensors (`G`, `Θ`) as `P⁻¹ A P^{-*}`. Determinant inequalities are stated in
//! a `g`-orthonormal frame, where an upper-index determinant picks up `det g`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::symfun::{EigenTuple, OperatorSpec};
use crate::{Error, Result};

/// Relative Cholesky pivot tolerance for positive-definiteness tests.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

const HERMITIAN_TOLERANCE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    /// Accepts `m` if it is Hermitian to `1e-14` relative to its largest entry.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let defect = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > HERMITIAN_TOLERANCE * scale {
            return Err(Error::Argument(format!(
                "matrix is not Hermitian (defect {defect:.3e})"
            )));
        }
        Ok(Self(m).symmetrized())
    }

    pub fn from_matrix_unchecked(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    /// Builds from row-major complex entries.
    pub fn from_rows(n: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    /// Averages with the adjoint and zeroes imaginary diagonal parts.
    pub fn symmetrized(self) -> Self {
        let m = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        Self(m)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn determinant(&self) -> f64 {
        self.0.clone().determinant().re
    }

    pub fn scale(&self, t: f64) -> Self {
        Self(&self.0 * Complex64::new(t, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Re tr(A B)`: the contraction of an upper-index tensor with a form.
    pub fn pair(&self, other: &Self) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.0[(i, j)] * other.0[(j, i)]).re;
            }
        }
        acc
    }

    /// Lower-triangular `L` with `L L^* = self`; fails when a pivot drops
    /// below `PIVOT_TOLERANCE` times the largest diagonal entry.
    pub fn cholesky(&self) -> Result<DMatrix<Complex64>> {
        let n = self.n();
        let scale = (0..n).map(|i| self.0[(i, i)].re.abs()).fold(0.0, f64::max);
        let floor = PIVOT_TOLERANCE * if scale > 0.0 { scale } else { 1.0 };
        let mut l = DMatrix::<Complex64>::zeros(n, n);
        for j in 0..n {
            let mut d = self.0[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > floor) {
                return Err(Error::MetricDegeneracy { pivot: d });
            }
            let ljj = d.sqrt();
            l[(j, j)] = Complex64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut v = self.0[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = v / ljj;
            }
        }
        Ok(l)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_ok()
    }

    /// Inverse of a positive definite matrix.
    pub fn inverse_pd(&self) -> Result<Self> {
        let l = self.cholesky()?;
        let n = self.n();
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(Error::MetricDegeneracy { pivot: 0.0 })?;
        Ok(Self(linv.adjoint() * linv).symmetrized())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Eigenpairs (ascending) with unitary eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<Complex64>) {
        let se = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.n(), self.n(), |r, c| se.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// Upper-index tensor expressed in a `g`-orthonormal frame: `L^* A L`.
    pub fn upper_in_frame(&self, g: &Self) -> Result<Self> {
        let l = g.cholesky()?;
        Ok(Self(l.adjoint() * &self.0 * l).symmetrized())
    }

    /// Lower-index form expressed in a `g`-orthonormal frame: `L⁻¹ A L^{-*}`.
    pub fn lower_in_frame(&self, g: &Self) -> Result<Self> {
        let l = g.cholesky()?;
        Ok(Self(reduce(&l, &self.0)?).symmetrized())
    }
}

/// `L⁻¹ A L^{-*}` for Hermitian `A`.
fn reduce(l: &DMatrix<Complex64>, a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let x = l
        .solve_lower_triangular(a)
        .ok_or(Error::MetricDegeneracy { pivot: 0.0 })?;
    l.solve_lower_triangular(&x.adjoint())
        .ok_or(Error::MetricDegeneracy { pivot: 0.0 })
}

fn check_same_n(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    Ok(())
}

/// Eigenvalues of `g⁻¹ g̃` (ascending) with `g`-orthonormal eigenvector columns
/// `e_j`: `g̃ e_j = λ_j g e_j`, `e_j^* g e_k = δ_jk`.
pub fn generalized_eigen(
    g: &HermitianMatrix,
    g_tilde: &HermitianMatrix,
) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    check_same_n(g, g_tilde)?;
    let l = g.cholesky()?;
    let c = HermitianMatrix(reduce(&l, &g_tilde.0)?).symmetrized();
    let (values, u) = c.eigen();
    let e = l
        .adjoint()
        .solve_upper_triangular(&u)
        .ok_or(Error::MetricDegeneracy { pivot: 0.0 })?;
    Ok((values, e))
}

pub fn endomorphism_eigs(g: &HermitianMatrix, g_tilde: &HermitianMatrix) -> Result<EigenTuple> {
    EigenTuple::new(generalized_eigen(g, g_tilde)?.0)
}

/// Pointwise linearization data of `log f(λ[g⁻¹ g̃])`.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub lambda: EigenTuple,
    pub f: f64,
    /// `G = Σ_j (∂_j f / f) e_j e_j^*`, so that `δ log f = tr(G δg̃)`.
    pub g_coeff: HermitianMatrix,
}

pub fn linearize(
    spec: &OperatorSpec,
    g: &HermitianMatrix,
    g_tilde: &HermitianMatrix,
) -> Result<Linearization> {
    let (values, e) = generalized_eigen(g, g_tilde)?;
    let lambda = EigenTuple::new(values)?;
    let (f, grad) = spec.eval_grad(&lambda)?;
    let n = g.n();
    let mut scaled = e.clone();
    for (j, gj) in grad.iter().enumerate() {
        let w = Complex64::new(gj / f, 0.0);
        for r in 0..n {
            scaled[(r, j)] *= w;
        }
    }
    let g_coeff = HermitianMatrix(scaled * e.adjoint()).symmetrized();
    Ok(Linearization { lambda, f, g_coeff })
}

pub fn linearization_g(
    spec: &OperatorSpec,
    g: &HermitianMatrix,
    g_tilde: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    Ok(linearize(spec, g, g_tilde)?.g_coeff)
}

/// `Θ = (tr(G g) g⁻¹ − G) / (n − 1)`.
pub fn theta(g_coeff: &HermitianMatrix, g: &HermitianMatrix) -> Result<HermitianMatrix> {
    check_same_n(g_coeff, g)?;
    let n = g.n();
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let t = g_coeff.pair(g);
    let g_inv = g.inverse_pd()?;
    Ok(g_inv.scale(t).sub(g_coeff).scale(1.0 / (n - 1) as f64).symmetrized())
}

/// `g_h + ((tr g⁻¹ H) g − H) / (n − 1)` for a complex Hessian `H`.
pub fn tilde_from_hessian(
    g: &HermitianMatrix,
    g_h: &HermitianMatrix,
    hessian: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    check_same_n(g, g_h)?;
    check_same_n(g, hessian)?;
    let n = g.n();
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let lap = g.inverse_pd()?.pair(hessian);
    Ok(g_h
        .add(&g.scale(lap).sub(hessian).scale(1.0 / (n - 1) as f64))
        .symmetrized())
}

/// Numbers behind the two parts of the Θ lemma at one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma1Report {
    /// `|tr(Θ H) − (1 − tr(G g_h))|`.
    pub residual_a: f64,
    /// `tr(G g_h)`, nonnegative.
    pub trace_g_gh: f64,
    /// `|tr(G g̃) − 1|`.
    pub trace_identity_residual: f64,
    /// Smallest eigenvalue of `Θ` in a `g`-orthonormal frame.
    pub pd_b: f64,
    /// Largest deviation of `Θ`, pulled back to the eigenframe of `g̃`, from its diagonal form, relative to `max θ_i`.
    pub frame_defect: f64,
    /// `det Θ` and `det G` in the eigenframe of `g̃`.
    pub det_theta: f64,
    pub det_g_coeff: f64,
    pub gamma_over_fn: f64,
    /// `det Θ − γ / f^n` in a `g`-orthonormal frame.
    pub slack_b: f64,
}

impl Lemma1Report {
    pub fn passes(&self) -> bool {
        self.residual_a <= 1e-9
            && self.pd_b > 0.0
            && self.slack_b >= -1e-12
            && self.trace_g_gh >= 0.0
            && self.frame_defect <= 1e-9
    }
}

pub fn verify_lemma1(
    spec: &OperatorSpec,
    g: &HermitianMatrix,
    g_h: &HermitianMatrix,
    g_tilde: &HermitianMatrix,
    hessian: &HermitianMatrix,
) -> Result<Lemma1Report> {
    let expected = tilde_from_hessian(g, g_h, hessian)?;
    let defect = expected.sub(g_tilde).max_abs();
    if defect > 1e-12 * (1.0 + g_tilde.max_abs()) {
        return Err(Error::InconsistentInput(format!(
            "g_tilde differs from g_h + ((tr H) g - H)/(n-1) by {defect:.3e}"
        )));
    }
    let lin = linearize(spec, g, g_tilde)?;
    let th = theta(&lin.g_coeff, g)?;
    let n = g.n() as i32;
    let trace_g_gh = lin.g_coeff.pair(g_h);
    // In the g-orthonormal eigenframe of g̃, G = diag(μ) and Θ = diag(Σ_{k≠i} μ_k/(n − 1)).
    let (_, frame) = generalized_eigen(g, g_tilde)?;
    let (f, grad) = spec.eval_grad(&lin.lambda)?;
    let mu: Vec<f64> = grad.iter().map(|d| d / f).collect();
    let diag: Vec<f64> = (0..mu.len())
        .map(|i| mu.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, m)| m).sum::<f64>() / (n - 1) as f64)
        .collect();
    let pulled = frame.adjoint() * g.matrix() * th.matrix() * g.matrix() * &frame;
    let scale = diag.iter().copied().fold(0.0, f64::max);
    let frame_defect = (0..g.n())
        .flat_map(|i| (0..g.n()).map(move |j| (i, j)))
        .map(|(i, j)| {
            let expected = if i == j { diag[i] } else { 0.0 };
            (pulled[(i, j)] - Complex64::new(expected, 0.0)).norm()
        })
        .fold(0.0, f64::max)
        / scale;
    let det_theta: f64 = diag.iter().product();
    let det_g_coeff: f64 = mu.iter().product();
    let gamma_over_fn = spec.gamma() / f.powi(n);
    Ok(Lemma1Report {
        residual_a: (th.pair(hessian) - (1.0 - trace_g_gh)).abs(),
        trace_g_gh,
        trace_identity_residual: (lin.g_coeff.pair(g_tilde) - 1.0).abs(),
        pd_b: diag.iter().copied().fold(f64::INFINITY, f64::min).min(th.upper_in_frame(g)?.min_eigenvalue()),
        frame_defect,
        det_theta,
        det_g_coeff,
        gamma_over_fn,
        slack_b: det_theta - gamma_over_fn,
    })
}
