//! Named test data on the torus: analytic fields, metric backgrounds, forcing families.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grid::{complex_from_real_hessian, entropy_norm_with_density, volume_density, HermitianField, ScalarField, TorusGrid};
use crate::hermlin::{tilde_from_hessian, HermitianMatrix};
use crate::sampling::rng;
use crate::symfun::OperatorSpec;
use crate::{Error, Result};

/// `amplitude · cos(2π (wave · x) / L + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wave: Vec<i32>,
    pub phase: f64,
}

/// Finite Fourier sum with exact values and derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    pub terms: Vec<TrigTerm>,
}

impl TrigField {
    fn argument(&self, term: &TrigTerm, period: f64, x: &[f64]) -> f64 {
        let dot: f64 = term.wave.iter().zip(x).map(|(&w, &xi)| w as f64 * xi).sum();
        2.0 * PI * dot / period + term.phase
    }

    pub fn value(&self, period: f64, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * self.argument(t, period, x).cos())
            .sum()
    }

    /// Row-major real Hessian over `(x_1, y_1, …)`.
    pub fn real_hessian(&self, period: f64, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut out = vec![0.0; d * d];
        let k = 2.0 * PI / period;
        for t in &self.terms {
            let c = -t.amplitude * k * k * self.argument(t, period, x).cos();
            for a in 0..d {
                for b in 0..d {
                    out[a * d + b] += c * (t.wave[a] * t.wave[b]) as f64;
                }
            }
        }
        out
    }

    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.value(grid.period, x))
    }

    pub fn complex_hessian(&self, grid: &TorusGrid) -> HermitianField {
        HermitianField::from_fn(grid, |p| {
            complex_from_real_hessian(grid.n, &self.real_hessian(grid.period, &grid.position(p)))
        })
    }

    pub fn flat_laplacian(&self, grid: &TorusGrid) -> ScalarField {
        let h = self.complex_hessian(grid);
        ScalarField::new((0..grid.len()).map(|p| h.at(p).trace()).collect())
    }

    /// Smooth profile used for manufactured solutions: all cosines peak at the
    /// origin, so the maximum sits on a grid point for every resolution.
    pub fn manufactured(n: usize, amplitude: f64) -> Self {
        let d = 2 * n;
        let unit = |entries: &[(usize, i32)]| {
            let mut w = vec![0; d];
            for &(a, v) in entries {
                w[a] = v;
            }
            w
        };
        let last = d - 1;
        let terms = vec![
            TrigTerm { amplitude, wave: unit(&[(0, 1)]), phase: 0.0 },
            TrigTerm { amplitude: 0.5 * amplitude, wave: unit(&[(last, 1)]), phase: 0.0 },
            TrigTerm { amplitude: 0.4 * amplitude, wave: unit(&[(0, 1), (last, 1)]), phase: 0.0 },
            TrigTerm { amplitude: 0.3 * amplitude, wave: unit(&[(1, 1), (2, -1)]), phase: 0.0 },
        ];
        Self { terms }
    }

    /// Random band-limited field with modes `|w_a| ≤ max_mode`, scaled to sup-norm bound `amplitude`.
    pub fn band_limited(n: usize, max_mode: u32, amplitude: f64, seed: u64) -> Self {
        let mut r = rng(seed);
        let d = 2 * n;
        let m = max_mode as i32;
        let mut terms = Vec::new();
        let count = 4 * d;
        for _ in 0..count {
            let wave: Vec<i32> = (0..d).map(|_| r.gen_range(-m..=m)).collect();
            if wave.iter().all(|&w| w == 0) {
                continue;
            }
            let c: f64 = r.sample(StandardNormal);
            terms.push(TrigTerm {
                amplitude: c,
                wave,
                phase: r.gen_range(0.0..2.0 * PI),
            });
        }
        let total: f64 = terms.iter().map(|t| t.amplitude.abs()).sum();
        let scale = if total > 0.0 { amplitude / total } else { 0.0 };
        terms.iter_mut().for_each(|t| t.amplitude *= scale);
        Self { terms }
    }
}

/// Smooth periodic Hermitian coefficient fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricGenerator {
    /// `scale · I`.
    Flat { scale: f64 },
    /// `I + amplitude · W(x)` with `‖W(x)‖ ≤ 1`; positive definite for `amplitude < 1`.
    Wave { amplitude: f64, mode: u32, phase: f64 },
}

impl Default for MetricGenerator {
    fn default() -> Self {
        Self::Flat { scale: 1.0 }
    }
}

impl MetricGenerator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Flat { scale } if !(scale > 0.0) => {
                Err(Error::Argument(format!("flat metric scale must be positive, got {scale}")))
            }
            Self::Wave { amplitude, .. } if !(0.0..1.0).contains(&amplitude) => Err(Error::Argument(
                format!("wave metric amplitude must lie in [0, 1), got {amplitude}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn matrix_at(&self, n: usize, period: f64, x: &[f64]) -> HermitianMatrix {
        match *self {
            Self::Flat { scale } => HermitianMatrix::identity(n).scale(scale),
            Self::Wave { amplitude, mode, phase } => {
                let k = 2.0 * PI * mode as f64 / period;
                let mut m = nalgebra::DMatrix::<Complex64>::identity(n, n);
                let off = if n > 1 { 0.5 / (n - 1) as f64 } else { 0.0 };
                for j in 0..n {
                    let diag = 0.5 * (k * x[2 * j] + phase + j as f64).cos();
                    m[(j, j)] += Complex64::new(amplitude * diag, 0.0);
                    for l in j + 1..n {
                        let mag = off * (k * x[2 * j + 1] + phase).sin();
                        let arg = k * (x[2 * l] + x[2 * l + 1]);
                        let z = Complex64::from_polar(amplitude * mag, arg);
                        m[(j, l)] += z;
                        m[(l, j)] += z.conj();
                    }
                }
                HermitianMatrix::from_matrix_unchecked(m)
            }
        }
    }

    pub fn field(&self, grid: &TorusGrid) -> Result<HermitianField> {
        self.validate()?;
        Ok(HermitianField::from_fn(grid, |p| {
            self.matrix_at(grid.n, grid.period, &grid.position(p))
        }))
    }
}

/// `(2πσ²)^{−n} Σ_images exp(−|x − c − L m|² / 2σ²)` over the `3^{2n}` nearest images.
pub fn periodized_gaussian(grid: &TorusGrid, center: &[f64], sigma: f64) -> ScalarField {
    let d = grid.dims();
    let l = grid.period;
    let norm = (2.0 * PI * sigma * sigma).powi(-(grid.n as i32));
    let images: Vec<Vec<f64>> = (0..3usize.pow(d as u32))
        .map(|mut code| {
            (0..d)
                .map(|_| {
                    let shift = (code % 3) as f64 - 1.0;
                    code /= 3;
                    shift * l
                })
                .collect()
        })
        .collect();
    ScalarField::from_fn(grid, |x| {
        images
            .iter()
            .map(|img| {
                let r2: f64 = (0..d).map(|a| (x[a] - center[a] - img[a]).powi(2)).sum();
                (-r2 / (2.0 * sigma * sigma)).exp()
            })
            .sum::<f64>()
            * norm
    })
}

/// Forcing families indexed by one concentration parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingFamily {
    Zero,
    /// `F = c` with `c` the parameter.
    Constant,
    /// `e^{nF} = 1 + weight · G_σ(x − center)` with `σ` the parameter.
    Gaussian {
        weight: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Sum of bumps of common width `σ` (the parameter).
    MultiGaussian { weight: f64, centers: Vec<Vec<f64>> },
    /// Random Fourier sum with sup bound given by the parameter.
    BandLimited { max_mode: u32 },
}

impl ForcingFamily {
    pub fn sample(&self, grid: &TorusGrid, parameter: f64, seed: u64) -> Result<ScalarField> {
        let d = grid.dims();
        let n = grid.n as f64;
        let default_center = vec![0.5 * grid.period; d];
        let check_center = |c: &Vec<f64>| {
            if c.len() != d {
                Err(Error::DimensionMismatch { expected: d, got: c.len() })
            } else {
                Ok(())
            }
        };
        let positive = |what: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::Argument(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            Self::Zero => Ok(ScalarField::zeros(grid)),
            Self::Constant => Ok(ScalarField::constant(grid, parameter)),
            Self::Gaussian { weight, center } => {
                positive("bump width", parameter)?;
                positive("bump weight", *weight)?;
                let c = center.clone().unwrap_or(default_center);
                check_center(&c)?;
                Ok(periodized_gaussian(grid, &c, parameter).map(|v| (1.0 + weight * v).ln() / n))
            }
            Self::MultiGaussian { weight, centers } => {
                positive("bump width", parameter)?;
                positive("bump weight", *weight)?;
                if centers.is_empty() {
                    return Err(Error::Argument("multi_gaussian needs at least one center".into()));
                }
                let mut acc = ScalarField::zeros(grid);
                for c in centers {
                    check_center(c)?;
                    let g = periodized_gaussian(grid, c, parameter);
                    acc.values.iter_mut().zip(&g.values).for_each(|(a, b)| *a += b);
                }
                let w = weight / centers.len() as f64;
                Ok(acc.map(|v| (1.0 + w * v).ln() / n))
            }
            Self::BandLimited { max_mode } => {
                Ok(TrigField::band_limited(grid.n, *max_mode, parameter, seed).sample(grid))
            }
        }
    }
}

/// `F = log f(λ[g⁻¹ g̃_{φ*}]) − b*` computed from the exact Hessian of `φ*`.
pub fn manufactured_forcing(
    spec: &OperatorSpec,
    grid: &TorusGrid,
    g: &HermitianField,
    g_h: &HermitianField,
    phi_star: &TrigField,
    b_star: f64,
) -> Result<ScalarField> {
    let hess = phi_star.complex_hessian(grid);
    let values = (0..grid.len())
        .map(|p| {
            let gp = g.at(p);
            let gt = tilde_from_hessian(&gp, &g_h.at(p), &hess.at(p))?;
            let lambda = crate::hermlin::endomorphism_eigs(&gp, &gt)?;
            Ok(spec.eval(&lambda).map_err(|e| with_point(e, p))?.ln() - b_star)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScalarField::new(values))
}

pub(crate) fn with_point(e: Error, p: usize) -> Error {
    match e {
        Error::ConeViolation { cone, test, .. } => Error::ConeViolation { cone, test, point: Some(p) },
        Error::DegeneratePoint { cone, test } => Error::ConeViolation { cone, test, point: Some(p) },
        other => other,
    }
}

/// Shift `c` with `entropy_norm(F + c) = target`, found by bracketing and bisection.
pub fn normalize_entropy(
    grid: &TorusGrid,
    forcing: &ScalarField,
    g: &HermitianField,
    p: f64,
    target: f64,
) -> Result<(ScalarField, f64)> {
    if !(target > 0.0) {
        return Err(Error::Argument(format!("target entropy norm must be positive, got {target}")));
    }
    if !(p > grid.n as f64) {
        return Err(Error::Argument(format!("entropy exponent p = {p} must exceed n = {}", grid.n)));
    }
    let density = volume_density(g);
    let norm = |c: f64| entropy_norm_with_density(grid, &forcing.shifted(c), &density, p);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while norm(lo) > target {
        lo *= 2.0;
        if lo < -1e3 {
            return Err(Error::Argument("entropy target below reachable range".into()));
        }
    }
    while norm(hi) < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Argument("entropy target above reachable range".into()));
        }
    }
    let tol = 1e-10 * target;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = norm(mid);
        if (v - target).abs() <= tol {
            break;
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((forcing.shifted(mid), mid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{complex_hessian, entropy_norm, integrate};
    use approx::assert_relative_eq;

    #[test]
    fn trig_hessian_matches_finite_differences() {
        let f = TrigField::manufactured(2, 0.1);
        let x = [0.13, 0.71, 0.42, 0.05];
        let h = 1e-4;
        let hess = f.real_hessian(1.0, &x);
        for a in 0..4 {
            for b in 0..4 {
                let mut pp = x;
                let mut pm = x;
                let mut mp = x;
                let mut mm = x;
                pp[a] += h;
                pp[b] += h;
                pm[a] += h;
                pm[b] -= h;
                mp[a] -= h;
                mp[b] += h;
                mm[a] -= h;
                mm[b] -= h;
                let fd = (f.value(1.0, &pp) - f.value(1.0, &pm) - f.value(1.0, &mp) + f.value(1.0, &mm)) / (4.0 * h * h);
                assert!((fd - hess[a * 4 + b]).abs() < 1e-5, "{a}{b}: {fd} vs {}", hess[a * 4 + b]);
            }
        }
    }

    #[test]
    fn manufactured_peaks_at_origin() {
        let f = TrigField::manufactured(2, 0.05);
        let grid = TorusGrid::new(2, 12, 1.0).unwrap();
        let s = f.sample(&grid);
        assert_eq!(s.max(), s.values[0]);
    }

    #[test]
    fn wave_metric_is_positive_definite_and_hermitian() {
        let grid = TorusGrid::new(2, 8, 1.0).unwrap();
        let g = MetricGenerator::Wave { amplitude: 0.9, mode: 1, phase: 0.3 }.field(&grid).unwrap();
        assert!(g.first_non_positive().is_none());
        assert!(g.hermitian_defect() < 1e-15);
        assert!(MetricGenerator::Wave { amplitude: 1.2, mode: 1, phase: 0.0 }.field(&grid).is_err());
    }

    #[test]
    fn gaussian_has_unit_mass() {
        let grid = TorusGrid::new(2, 16, 1.0).unwrap();
        let one = ScalarField::constant(&grid, 1.0);
        let g = periodized_gaussian(&grid, &[0.5; 4], 0.15);
        assert_relative_eq!(integrate(&grid, &g, &one), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn discrete_hessian_of_trig_field_is_second_order() {
        let f = TrigField::manufactured(2, 1.0);
        let err = |n: usize| {
            let grid = TorusGrid::new(2, n, 1.0).unwrap();
            let exact = f.complex_hessian(&grid);
            let disc = complex_hessian(&f.sample(&grid), &grid).unwrap();
            (0..grid.len()).map(|p| exact.at(p).sub(&disc.at(p)).max_abs()).fold(0.0, f64::max)
        };
        let ratio = err(8) / err(16);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn entropy_normalization_hits_target() {
        let grid = TorusGrid::new(2, 8, 1.0).unwrap();
        let g = HermitianField::identity(&grid);
        let f = ForcingFamily::Gaussian { weight: 0.5, center: None }.sample(&grid, 0.2, 0).unwrap();
        let (shifted, _) = normalize_entropy(&grid, &f, &g, 3.0, 4.0).unwrap();
        assert_relative_eq!(entropy_norm(&grid, &shifted, &g, 3.0).unwrap(), 4.0, max_relative = 1e-10);
    }

    #[test]
    fn band_limited_is_reproducible_and_bounded() {
        let grid = TorusGrid::new(2, 8, 1.0).unwrap();
        let fam = ForcingFamily::BandLimited { max_mode: 2 };
        let a = fam.sample(&grid, 0.3, 9).unwrap();
        assert_eq!(a, fam.sample(&grid, 0.3, 9).unwrap());
        assert!(a.sup_norm() <= 0.3 + 1e-12);
    }
}
