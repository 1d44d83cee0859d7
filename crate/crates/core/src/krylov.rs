//! Matrix-free Krylov iteration and preconditioners for the grid operators.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{pair_list, TorusGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB for `A x = b`, starting from the given `x`.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iterations: usize,
) -> KrylovOutcome {
    let m = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; m];
    apply(x, &mut r);
    for i in 0..m {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut p_hat = vec![0.0; m];
    let mut s = vec![0.0; m];
    let mut s_hat = vec![0.0; m];
    let mut t = vec![0.0; m];
    let mut rel = norm(&r) / b_norm;
    for it in 1..=max_iterations {
        if rel <= rtol {
            return KrylovOutcome {
                iterations: it - 1,
                relative_residual: rel,
                converged: true,
            };
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..m {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precondition(&p, &mut p_hat);
        apply(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        for i in 0..m {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / b_norm <= rtol {
            for i in 0..m {
                x[i] += alpha * p_hat[i];
            }
            return KrylovOutcome {
                iterations: it,
                relative_residual: norm(&s) / b_norm,
                converged: true,
            };
        }
        precondition(&s, &mut s_hat);
        apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..m {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / b_norm;
    }
    // recompute the true residual before reporting failure
    apply(x, &mut r);
    for i in 0..m {
        r[i] = b[i] - r[i];
    }
    let rel = norm(&r) / b_norm;
    KrylovOutcome {
        iterations: max_iterations,
        relative_residual: rel,
        converged: rel <= rtol,
    }
}

/// Pointwise inverse of a nonvanishing diagonal.
pub fn jacobi(diagonal: &[f64]) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |r, z| {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(diagonal) {
            *zi = ri / di;
        }
    }
}

/// In-place multidimensional FFT over a cubic periodic grid.
pub struct CubicFft {
    points: usize,
    dims: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CubicFft {
    pub fn new(points: usize, dims: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            points,
            dims,
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.points;
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..self.dims {
            let stride = n.pow((self.dims - 1 - axis) as u32);
            let block = stride * n;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[base + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = *v;
                    }
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, self.forward.as_ref());
    }

    /// Inverse transform including the `1/len` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, self.inverse.as_ref());
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Exact inverse of a constant-coefficient periodic operator
/// `Σ K_aa D_aa + Σ_{a<b} K_ab D_ab` on mean-zero fields, through its Fourier symbol.
pub struct SpectralInverse {
    fft: CubicFft,
    inverse_symbol: Vec<f64>,
}

impl SpectralInverse {
    /// `coeffs` in the layout of [`crate::grid::Stencil::apply`].
    pub fn new(grid: &TorusGrid, coeffs: &[f64]) -> Self {
        let dims = grid.dims();
        let n = grid.points;
        let h2 = grid.spacing().powi(2);
        let pairs = pair_list(dims);
        let angle: Vec<(f64, f64)> = (0..n)
            .map(|m| {
                let t = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
                ((2.0 * t.cos() - 2.0) / h2, t.sin())
            })
            .collect();
        let inverse_symbol = (0..grid.len())
            .map(|p| {
                let c = grid.coords(p);
                let mut sym: f64 = (0..dims).map(|a| coeffs[a] * angle[c[a]].0).sum();
                for (k, &(a, b)) in pairs.iter().enumerate() {
                    sym -= coeffs[dims + k] * angle[c[a]].1 * angle[c[b]].1 / h2;
                }
                if p == 0 || sym == 0.0 {
                    0.0
                } else {
                    1.0 / sym
                }
            })
            .collect();
        Self {
            fft: CubicFft::new(n, dims),
            inverse_symbol,
        }
    }

    /// Solves `L z = r − mean(r)` with `mean(z) = 0`.
    pub fn solve(&self, r: &[f64], z: &mut [f64]) {
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        for (v, s) in buf.iter_mut().zip(&self.inverse_symbol) {
            *v *= *s;
        }
        self.fft.inverse(&mut buf);
        for (zi, v) in z.iter_mut().zip(&buf) {
            *zi = v.re;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ScalarField, TorusGrid};

    #[test]
    fn bicgstab_solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, -1.0, 3.0]];
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..3 {
                y[i] = (0..3).map(|j| a[i][j] * x[j]).sum();
            }
        };
        let b = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        let out = bicgstab(apply, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 50);
        assert!(out.converged);
        let mut y = [0.0; 3];
        apply(&x, &mut y);
        for i in 0..3 {
            assert!((y[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_inverse_inverts_constant_operator() {
        let grid = TorusGrid::new(2, 8, 1.0).unwrap();
        let stencil = grid.stencil();
        let k = [1.0, 0.8, 1.2, 0.9, 0.1, -0.05, 0.02, 0.03, 0.0, 0.07];
        let coeffs: Vec<f64> = (0..grid.len()).flat_map(|_| k).collect();
        let inv = SpectralInverse::new(&grid, &k);
        let x = ScalarField::from_fn(&grid, |p| (6.0 * p[0] + 3.0 * p[3]).sin() + p[1].cos().powi(3));
        let x0 = x.shifted(-x.mean());
        let mut y = vec![0.0; grid.len()];
        stencil.apply(&coeffs, &x0.values, &mut y);
        let mut z = vec![0.0; grid.len()];
        inv.solve(&y, &mut z);
        for (a, b) in z.iter().zip(&x0.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
