//! Flat complex torus `(R/LZ)^{2n}` sampled on `N^{2n}` points.
//!
//! Real coordinates are ordered `(x_1, y_1, …, x_n, y_n)` with `z_j = x_j + i y_j`;
//! linear indices are lexicographic in that order (`x_1` slowest).

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::hermlin::{tilde_from_hessian, HermitianMatrix};
use crate::{Error, Result};

/// Smallest supported number of points per axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    /// Complex dimension.
    pub n: usize,
    /// Points per real axis.
    pub points: usize,
    /// Period per real axis.
    pub period: f64,
}

impl TorusGrid {
    pub fn new(n: usize, points: usize, period: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if points < MIN_POINTS {
            return Err(Error::Argument(format!(
                "need at least {MIN_POINTS} points per axis, got {points}"
            )));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Argument(format!("period must be positive, got {period}")));
        }
        let total = (points as u128).pow(2 * n as u32);
        if total >= u32::MAX as u128 {
            return Err(Error::Argument(format!("grid with {total} points is too large")));
        }
        Ok(Self { n, points, period })
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points as f64
    }

    /// Number of real axes `2n`.
    pub fn dims(&self) -> usize {
        2 * self.n
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `h^{2n}` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims() as i32)
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(self.dims() as i32)
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            c[a] = index % self.points;
            index /= self.points;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.points + c % self.points)
    }

    /// Index of `base + offset` with periodic wrap.
    pub fn offset_index(&self, base: &[usize], offset: &[i64]) -> usize {
        let n = self.points as i64;
        base.iter()
            .zip(offset)
            .fold(0, |acc, (&c, &o)| acc * self.points + (c as i64 + o).rem_euclid(n) as usize)
    }

    pub fn position(&self, index: usize) -> Vec<f64> {
        let h = self.spacing();
        self.coords(index).into_iter().map(|c| c as f64 * h).collect()
    }

    /// Squared periodic distance between two grid points.
    pub fn distance_squared(&self, a: usize, b: usize) -> f64 {
        let h = self.spacing();
        let n = self.points as i64;
        self.coords(a)
            .iter()
            .zip(self.coords(b))
            .map(|(&x, y)| {
                let d = (x as i64 - y as i64).rem_euclid(n);
                let d = d.min(n - d) as f64 * h;
                d * d
            })
            .sum()
    }

    /// Periodic second-order stencil tables for this grid.
    pub fn stencil(&self) -> Stencil {
        let dims = self.dims();
        let len = self.len();
        let mut axis = Vec::with_capacity(len * dims * 2);
        let mut offset = vec![0i64; dims];
        for p in 0..len {
            let c = self.coords(p);
            for a in 0..dims {
                for d in [1i64, -1] {
                    offset[a] = d;
                    axis.push(self.offset_index(&c, &offset) as u32);
                }
                offset[a] = 0;
            }
        }
        let pairs = pair_list(dims);
        let mut diag = Vec::with_capacity(len * pairs.len() * 4);
        for p in 0..len {
            for &(a, b) in &pairs {
                for (da, db) in CROSS_SIGNS {
                    let first = axis[(p * dims + a) * 2 + sign_slot(da)] as usize;
                    diag.push(axis[(first * dims + b) * 2 + sign_slot(db)]);
                }
            }
        }
        Stencil {
            dims,
            len,
            spacing: self.spacing(),
            axis,
            diag,
            ghosts: Vec::new(),
        }
    }
}

const CROSS_SIGNS: [(i64, i64); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

fn sign_slot(d: i64) -> usize {
    if d > 0 {
        0
    } else {
        1
    }
}

/// Off-diagonal axis pairs `(a, b)`, `a < b`, in lexicographic order.
pub fn pair_list(dims: usize) -> Vec<(usize, usize)> {
    (0..dims)
        .flat_map(|a| (a + 1..dims).map(move |b| (a, b)))
        .collect()
}

/// Marker for a neighbor outside the unknown set; its value is taken as zero.
pub const OUTSIDE: u32 = u32::MAX;
/// Flag bit marking a table entry as an index into the ghost list.
pub const GHOST: u32 = 1 << 31;

/// Exterior value defined as an affine combination of interior values.
pub type Ghost = [(u32, f64); 2];

/// Neighbor tables for the second-order central and cross stencils.
///
/// Entry layout per point: `axis[(p·dims + a)·2 + {0: +, 1: −}]` and
/// `diag[(p·pairs + k)·4 + {++, +−, −+, −−}]` for the k-th pair of
/// [`pair_list`]. Entries equal to [`OUTSIDE`] read as zero; entries with the
/// [`GHOST`] bit read as the weighted sum stored in the ghost list.
#[derive(Clone, Debug)]
pub struct Stencil {
    dims: usize,
    len: usize,
    spacing: f64,
    axis: Vec<u32>,
    diag: Vec<u32>,
    ghosts: Vec<Ghost>,
}

/// Per-point coefficients of `Σ_a K_aa ∂_a² + Σ_{a<b} K_ab ∂_a∂_b`, stored
/// diagonal terms first, then pairs in [`pair_list`] order.
pub type SecondOrderCoefficients = Vec<f64>;

impl Stencil {
    pub fn from_tables(dims: usize, spacing: f64, axis: Vec<u32>, diag: Vec<u32>, ghosts: Vec<Ghost>) -> Self {
        let len = axis.len() / (2 * dims);
        debug_assert_eq!(diag.len(), len * 4 * pair_list(dims).len());
        Self {
            dims,
            len,
            spacing,
            axis,
            diag,
            ghosts,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of coefficients per point: `dims + dims(dims−1)/2`.
    pub fn terms(&self) -> usize {
        self.dims * (self.dims + 1) / 2
    }

    #[inline]
    fn read(&self, v: &[f64], idx: u32) -> f64 {
        if idx & GHOST == 0 {
            v[idx as usize]
        } else if idx == OUTSIDE {
            0.0
        } else {
            let [(i, a), (j, b)] = self.ghosts[(idx & !GHOST) as usize];
            a * v[i as usize] + b * v[j as usize]
        }
    }

    /// Weight of `v[p]` in the value read through table entry `idx`.
    fn weight_of(&self, idx: u32, p: usize) -> f64 {
        if idx & GHOST == 0 {
            f64::from(u8::from(idx as usize == p))
        } else if idx == OUTSIDE {
            0.0
        } else {
            self.ghosts[(idx & !GHOST) as usize]
                .iter()
                .filter(|(i, _)| *i as usize == p)
                .map(|(_, w)| w)
                .sum()
        }
    }

    pub fn neighbor(&self, p: usize, axis: usize, forward: bool) -> u32 {
        self.axis[(p * self.dims + axis) * 2 + usize::from(!forward)]
    }

    /// Every neighbor (axis and diagonal) of `p`.
    pub fn all_neighbors(&self, p: usize) -> impl Iterator<Item = u32> + '_ {
        let pairs = self.dims * (self.dims - 1) / 2;
        self.axis[p * self.dims * 2..(p + 1) * self.dims * 2]
            .iter()
            .chain(&self.diag[p * pairs * 4..(p + 1) * pairs * 4])
            .copied()
    }

    /// Discrete real Hessian at `p`, row-major `dims × dims`.
    pub fn real_hessian(&self, v: &[f64], p: usize, out: &mut [f64]) {
        let d = self.dims;
        let h2 = self.spacing * self.spacing;
        let center = v[p];
        for a in 0..d {
            let base = (p * d + a) * 2;
            let plus = self.read(v, self.axis[base]);
            let minus = self.read(v, self.axis[base + 1]);
            out[a * d + a] = (plus - 2.0 * center + minus) / h2;
        }
        let pairs = d * (d - 1) / 2;
        let mut k = 0;
        for a in 0..d {
            for b in a + 1..d {
                let base = (p * pairs + k) * 4;
                let val = (self.read(v, self.diag[base]) - self.read(v, self.diag[base + 1])
                    - self.read(v, self.diag[base + 2])
                    + self.read(v, self.diag[base + 3]))
                    / (4.0 * h2);
                out[a * d + b] = val;
                out[b * d + a] = val;
                k += 1;
            }
        }
    }

    /// `out_p = Σ K_ab(p) D_ab v(p)` with per-point coefficients.
    pub fn apply(&self, coeffs: &[f64], v: &[f64], out: &mut [f64]) {
        let d = self.dims;
        let t = self.terms();
        let pairs = d * (d - 1) / 2;
        let inv_h2 = 1.0 / (self.spacing * self.spacing);
        let inv_4h2 = 0.25 * inv_h2;
        for p in 0..self.len {
            let c = &coeffs[p * t..(p + 1) * t];
            let center = v[p];
            let mut acc = 0.0;
            let ax = &self.axis[p * d * 2..(p + 1) * d * 2];
            for a in 0..d {
                acc += c[a]
                    * (self.read(v, ax[2 * a]) - 2.0 * center + self.read(v, ax[2 * a + 1]))
                    * inv_h2;
            }
            let dg = &self.diag[p * pairs * 4..(p + 1) * pairs * 4];
            for k in 0..pairs {
                let q = &dg[4 * k..4 * k + 4];
                acc += c[d + k]
                    * (self.read(v, q[0]) - self.read(v, q[1]) - self.read(v, q[2])
                        + self.read(v, q[3]))
                    * inv_4h2;
            }
            out[p] = acc;
        }
    }

    /// Diagonal of the matrix applied by [`apply`](Self::apply).
    pub fn diagonal(&self, coeffs: &[f64]) -> Vec<f64> {
        let d = self.dims;
        let t = self.terms();
        let pairs = d * (d - 1) / 2;
        let inv_h2 = 1.0 / (self.spacing * self.spacing);
        (0..self.len)
            .map(|p| {
                let c = &coeffs[p * t..(p + 1) * t];
                let ax = &self.axis[p * d * 2..(p + 1) * d * 2];
                let mut w = 0.0;
                for a in 0..d {
                    w += c[a] * (self.weight_of(ax[2 * a], p) - 2.0 + self.weight_of(ax[2 * a + 1], p)) * inv_h2;
                }
                let dg = &self.diag[p * pairs * 4..(p + 1) * pairs * 4];
                for k in 0..pairs {
                    let q = &dg[4 * k..4 * k + 4];
                    w += c[d + k]
                        * (self.weight_of(q[0], p) - self.weight_of(q[1], p) - self.weight_of(q[2], p)
                            + self.weight_of(q[3], p))
                        * 0.25
                        * inv_h2;
                }
                w
            })
            .collect()
    }

    pub fn complex_hessian_at(&self, n: usize, v: &[f64], p: usize) -> HermitianMatrix {
        let mut real = vec![0.0; self.dims * self.dims];
        self.real_hessian(v, p, &mut real);
        complex_from_real_hessian(n, &real)
    }
}

/// `φ_{i j̄} = ¼(φ_{x_i x_j} + φ_{y_i y_j}) + (i/4)(φ_{x_i y_j} − φ_{y_i x_j})`
/// from a row-major real Hessian over `(x_1, y_1, …)`.
pub fn complex_from_real_hessian(n: usize, real: &[f64]) -> HermitianMatrix {
    let d = 2 * n;
    let mut m = nalgebra::DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.25 * (real[2 * i * d + 2 * j] + real[(2 * i + 1) * d + 2 * j + 1]);
            let im = 0.25 * (real[2 * i * d + 2 * j + 1] - real[(2 * i + 1) * d + 2 * j]);
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    HermitianMatrix::from_matrix_unchecked(m)
}

/// Real coefficients `K` with `tr(Θ H(D)) = Σ_a K_aa D_aa + Σ_{a<b} K_ab D_ab`
/// for an upper-index Hermitian `Θ` and the complex Hessian `H(D)` of a real Hessian `D`.
pub fn coefficients_from_upper(theta: &HermitianMatrix, out: &mut [f64]) {
    let n = theta.n();
    let d = 2 * n;
    let mut w = vec![0.0; d * d];
    for i in 0..n {
        for j in 0..n {
            let t = theta.entry(i, j);
            // Re(Θ_ij H_ji) with H_ji = ¼(D[2j][2i] + D[2j+1][2i+1]) + (i/4)(D[2j][2i+1] − D[2j+1][2i]).
            w[2 * j * d + 2 * i] += 0.25 * t.re;
            w[(2 * j + 1) * d + 2 * i + 1] += 0.25 * t.re;
            w[2 * j * d + 2 * i + 1] -= 0.25 * t.im;
            w[(2 * j + 1) * d + 2 * i] += 0.25 * t.im;
        }
    }
    for a in 0..d {
        out[a] = w[a * d + a];
    }
    for (k, (a, b)) in pair_list(d).into_iter().enumerate() {
        out[d + k] = w[a * d + b] + w[b * d + a];
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            values: (0..grid.len()).map(|p| f(&grid.position(p))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Lowest index attaining the minimum.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn shifted(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn check_len(&self, grid: &TorusGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: self.len(),
            });
        }
        Ok(())
    }

    /// CSV with one row per point: index, real coordinates, value.
    pub fn write_csv<W: Write>(&self, grid: &TorusGrid, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["index".to_string()];
        for j in 1..=grid.n {
            header.push(format!("x{j}"));
            header.push(format!("y{j}"));
        }
        header.push("value".into());
        writeln!(out, "{}", header.join(","))?;
        for (p, v) in self.values.iter().enumerate() {
            let pos: Vec<String> = grid.position(p).iter().map(|x| format!("{x:.12e}")).collect();
            writeln!(out, "{p},{},{v:.17e}", pos.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(grid: &TorusGrid, input: R) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let last = line.rsplit(',').next().unwrap_or_default();
            values.push(
                last.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad value `{last}`", i + 1)))?,
            );
        }
        let field = Self::new(values);
        field.check_len(grid)?;
        Ok(field)
    }

    /// Little-endian `f64` values in index order, no header.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(grid: &TorusGrid, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != grid.len() * 8 {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * 8,
                got: bytes.len(),
            });
        }
        Ok(Self::new(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect(),
        ))
    }
}

/// One Hermitian `n × n` matrix per grid point, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianField {
    n: usize,
    data: Vec<Complex64>,
}

impl HermitianField {
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(usize) -> HermitianMatrix) -> Self {
        let n = grid.n;
        let mut data = Vec::with_capacity(grid.len() * n * n);
        for p in 0..grid.len() {
            let m = f(p);
            debug_assert_eq!(m.n(), n);
            for i in 0..n {
                for j in 0..n {
                    data.push(m.entry(i, j));
                }
            }
        }
        Self { n, data }
    }

    pub fn try_from_fn(
        grid: &TorusGrid,
        f: impl Fn(usize) -> Result<HermitianMatrix>,
    ) -> Result<Self> {
        let n = grid.n;
        let mut data = Vec::with_capacity(grid.len() * n * n);
        for p in 0..grid.len() {
            let m = f(p)?;
            for i in 0..n {
                for j in 0..n {
                    data.push(m.entry(i, j));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn constant(grid: &TorusGrid, m: &HermitianMatrix) -> Self {
        Self::from_fn(grid, |_| m.clone())
    }

    pub fn identity(grid: &TorusGrid) -> Self {
        Self::constant(grid, &HermitianMatrix::identity(grid.n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, p: usize) -> HermitianMatrix {
        let nn = self.n * self.n;
        HermitianMatrix::from_matrix_unchecked(nalgebra::DMatrix::from_row_slice(
            self.n,
            self.n,
            &self.data[p * nn..(p + 1) * nn],
        ))
    }

    pub fn check_len(&self, grid: &TorusGrid) -> Result<()> {
        if self.len() != grid.len() || self.n != grid.n {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: self.len(),
            });
        }
        Ok(())
    }

    /// First grid point where the field fails the positive-definiteness test.
    pub fn first_non_positive(&self) -> Option<usize> {
        (0..self.len()).find(|&p| !self.at(p).is_positive_definite())
    }

    /// Largest pointwise deviation from conjugate symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let nn = n * n;
        let mut worst: f64 = 0.0;
        for p in 0..self.len() {
            let m = &self.data[p * nn..(p + 1) * nn];
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((m[i * n + j] - m[j * n + i].conj()).norm());
                }
            }
        }
        worst
    }
}

/// Discrete complex Hessian `i∂∂̄φ` with periodic central differences.
pub fn complex_hessian(phi: &ScalarField, grid: &TorusGrid) -> Result<HermitianField> {
    phi.check_len(grid)?;
    let stencil = grid.stencil();
    Ok(complex_hessian_with(phi, grid, &stencil))
}

pub fn complex_hessian_with(phi: &ScalarField, grid: &TorusGrid, stencil: &Stencil) -> HermitianField {
    HermitianField::from_fn(grid, |p| stencil.complex_hessian_at(grid.n, &phi.values, p))
}

/// `Δ_ω φ = tr(g⁻¹ i∂∂̄φ)`.
pub fn laplacian(phi: &ScalarField, g: &HermitianField, grid: &TorusGrid) -> Result<ScalarField> {
    g.check_len(grid)?;
    let hess = complex_hessian(phi, grid)?;
    laplacian_from_hessian(&hess, g)
}

pub fn laplacian_from_hessian(hess: &HermitianField, g: &HermitianField) -> Result<ScalarField> {
    let values = (0..hess.len())
        .map(|p| Ok(g.at(p).inverse_pd()?.pair(&hess.at(p))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScalarField::new(values))
}

/// `g̃ = g_h + ((Δ_ω φ) g − i∂∂̄φ) / (n − 1)` pointwise.
pub fn tilde_omega(
    phi: &ScalarField,
    g: &HermitianField,
    g_h: &HermitianField,
    grid: &TorusGrid,
) -> Result<HermitianField> {
    g.check_len(grid)?;
    g_h.check_len(grid)?;
    let hess = complex_hessian(phi, grid)?;
    HermitianField::try_from_fn(grid, |p| tilde_from_hessian(&g.at(p), &g_h.at(p), &hess.at(p)))
}

/// `det g` per point: the density of `ω^n` against the flat volume.
pub fn volume_density(g: &HermitianField) -> ScalarField {
    ScalarField::new((0..g.len()).map(|p| g.at(p).determinant()).collect())
}

pub fn integrate(grid: &TorusGrid, field: &ScalarField, density: &ScalarField) -> f64 {
    field
        .values
        .iter()
        .zip(&density.values)
        .map(|(v, d)| v * d)
        .sum::<f64>()
        * grid.cell_volume()
}

/// `∫ e^F (log(e + e^F))^p dV_g`, the Orlicz-type size of `e^F`.
pub fn entropy_norm(grid: &TorusGrid, forcing: &ScalarField, g: &HermitianField, p: f64) -> Result<f64> {
    if !(p > grid.n as f64) {
        return Err(Error::Argument(format!(
            "entropy exponent p = {p} must exceed n = {}",
            grid.n
        )));
    }
    forcing.check_len(grid)?;
    let density = volume_density(g);
    Ok(entropy_norm_with_density(grid, forcing, &density, p))
}

pub fn entropy_norm_with_density(grid: &TorusGrid, forcing: &ScalarField, density: &ScalarField, p: f64) -> f64 {
    let integrand = forcing.map(|f| {
        let ef = f.exp();
        ef * (std::f64::consts::E + ef).ln().powf(p)
    });
    integrate(grid, &integrand, density)
}

/// `φ − max φ`.
pub fn normalize_sup(phi: &ScalarField) -> ScalarField {
    let m = phi.max();
    phi.shifted(-m)
}
