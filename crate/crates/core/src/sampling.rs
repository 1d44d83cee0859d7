//! Reproducible random draws: cone points, Hermitian matrices, metrics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hermlin::HermitianMatrix;
use crate::symfun::{ConeSpec, EigenTuple};
use crate::{Error, Result};

const MAX_REJECTIONS: usize = 100_000;

/// Rejection sampler: Gaussian centered at `(1, …, 1)` with scale 0.5,
/// keeping draws that lie inside the cone.
pub struct ConeSampler {
    cone: ConeSpec,
    n: usize,
    rng: ChaCha8Rng,
}

impl ConeSampler {
    pub fn new(cone: ConeSpec, n: usize, seed: u64) -> Self {
        Self {
            cone,
            n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> Result<EigenTuple> {
        for _ in 0..MAX_REJECTIONS {
            let values: Vec<f64> = (0..self.n)
                .map(|_| 1.0 + 0.5 * self.rng.sample::<f64, _>(StandardNormal))
                .collect();
            let lambda = EigenTuple::new(values)?;
            if self.cone.check_interior(&lambda).is_ok() {
                return Ok(lambda);
            }
        }
        Err(Error::Argument(format!("cone {} rejected every draw", self.cone)))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_gaussian_matrix<R: Rng>(rng: &mut R, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Hermitian matrix with standard Gaussian entries.
pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> HermitianMatrix {
    let a = complex_gaussian_matrix(rng, n);
    HermitianMatrix::from_matrix_unchecked((&a + a.adjoint()) * Complex64::new(0.5, 0.0))
}

/// Positive definite matrix `A A^* / n + floor · I`.
pub fn random_metric<R: Rng>(rng: &mut R, n: usize, floor: f64) -> HermitianMatrix {
    let a = complex_gaussian_matrix(rng, n);
    let m = &a * a.adjoint() / Complex64::new(n as f64, 0.0)
        + DMatrix::identity(n, n) * Complex64::new(floor, 0.0);
    HermitianMatrix::from_matrix_unchecked(m).symmetrized()
}

/// Hermitian matrix `U diag(λ) U^*` with a random unitary `U`.
pub fn hermitian_with_eigenvalues<R: Rng>(rng: &mut R, lambda: &[f64]) -> HermitianMatrix {
    let n = lambda.len();
    let q = complex_gaussian_matrix(rng, n).qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        lambda.iter().map(|&v| Complex64::new(v, 0.0)),
    ));
    HermitianMatrix::from_matrix_unchecked(&q * d * q.adjoint()).symmetrized()
}
