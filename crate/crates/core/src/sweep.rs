//! Uniformity sweeps: solve a forcing family at a fixed entropy norm and
//! record how large the solutions get.

use serde::{Deserialize, Serialize};

use crate::auxiliary::run_parallel;
use crate::generators::{normalize_entropy, ForcingFamily};
use crate::grid::{entropy_norm, HermitianField, TorusGrid};
use crate::solver::{l1_bound_check, solve_primary, PrimaryProblem};
use crate::symfun::OperatorSpec;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub family: ForcingFamily,
    /// Concentration parameters, in order of increasing concentration.
    pub parameters: Vec<f64>,
    pub entropy_p: f64,
    /// Common entropy norm; the first member's unshifted norm when absent.
    pub target_entropy: Option<f64>,
    pub seed: u64,
    pub workers: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    /// Constant added to `F` to reach the target norm.
    pub shift: f64,
    pub entropy_norm: f64,
    pub sup_norm: Option<f64>,
    pub b: Option<f64>,
    pub iterations: Option<usize>,
    pub residual_sup: Option<f64>,
    /// Smallest `Δ_ω φ + C′` over the grid.
    pub laplacian_margin: Option<f64>,
    pub l1_pass: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub target_entropy: f64,
    pub rows: Vec<SweepRow>,
    /// `max ‖φ‖_∞ / min ‖φ‖_∞` over solved members with `‖φ‖_∞ > 0`.
    pub sup_ratio: Option<f64>,
    pub monotone_divergence: bool,
    pub failures: usize,
}

/// Growth that is strictly increasing with non-shrinking increments.
pub fn is_monotone_divergence(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let steps: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    steps.iter().all(|&d| d > 0.0) && steps.windows(2).all(|w| w[1] >= w[0])
}

pub fn run_sweep(
    spec: &OperatorSpec,
    grid: &TorusGrid,
    g: &HermitianField,
    g_h: &HermitianField,
    config: &SweepConfig,
) -> Result<SweepSummary> {
    if config.parameters.is_empty() {
        return Err(Error::Argument("sweep needs at least one parameter".into()));
    }
    let forcings = config
        .parameters
        .iter()
        .map(|&t| config.family.sample(grid, t, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let target = match config.target_entropy {
        Some(t) => t,
        None => entropy_norm(grid, &forcings[0], g, config.entropy_p)?,
    };
    let jobs: Vec<usize> = (0..forcings.len()).collect();
    let rows = run_parallel(&jobs, config.workers, |&i| {
        let parameter = config.parameters[i];
        let mut row = SweepRow {
            parameter,
            shift: f64::NAN,
            entropy_norm: f64::NAN,
            sup_norm: None,
            b: None,
            iterations: None,
            residual_sup: None,
            laplacian_margin: None,
            l1_pass: None,
            error: None,
        };
        let outcome = (|| -> Result<()> {
            let (forcing, shift) = normalize_entropy(grid, &forcings[i], g, config.entropy_p, target)?;
            row.shift = shift;
            row.entropy_norm = entropy_norm(grid, &forcing, g, config.entropy_p)?;
            let problem = PrimaryProblem::new(spec.clone(), *grid, g.clone(), g_h.clone(), forcing)?
                .with_tolerance(config.tolerance)
                .with_max_iterations(config.max_iterations);
            let sol = solve_primary(&problem, None)?;
            let l1 = l1_bound_check(grid, &sol.phi, g, g_h)?;
            row.sup_norm = Some(sol.phi.sup_norm());
            row.b = Some(sol.b);
            row.iterations = Some(sol.iterations);
            row.residual_sup = Some(sol.residual_sup);
            row.laplacian_margin = Some(l1.laplacian_margin);
            row.l1_pass = Some(l1.pass);
            Ok(())
        })();
        if let Err(e) = outcome {
            row.error = Some(e.to_string());
        }
        row
    });
    let sups: Vec<f64> = rows.iter().filter_map(|r| r.sup_norm).collect();
    let positive: Vec<f64> = sups.iter().copied().filter(|&v| v > 0.0).collect();
    let sup_ratio = (!positive.is_empty()).then(|| {
        positive.iter().copied().fold(0.0, f64::max) / positive.iter().copied().fold(f64::INFINITY, f64::min)
    });
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    Ok(SweepSummary {
        target_entropy: target,
        monotone_divergence: failures == 0 && is_monotone_divergence(&sups),
        sup_ratio,
        failures,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_pattern() {
        assert!(is_monotone_divergence(&[1.0, 1.5, 2.5, 4.0]));
        assert!(!is_monotone_divergence(&[1.0, 1.5, 1.8, 1.9]));
        assert!(!is_monotone_divergence(&[1.0, 0.9, 1.5]));
        assert!(!is_monotone_divergence(&[1.0, 2.0]));
    }

    #[test]
    fn constant_family_gives_zero_potentials() {
        let grid = TorusGrid::new(2, 8, 1.0).unwrap();
        let g = HermitianField::identity(&grid);
        let config = SweepConfig {
            family: ForcingFamily::Constant,
            parameters: vec![-0.5, 0.0, 0.7],
            entropy_p: 3.0,
            target_entropy: None,
            seed: 1,
            workers: 1,
            tolerance: 1e-8,
            max_iterations: 20,
        };
        let spec = OperatorSpec::monge_ampere(2).unwrap();
        let out = run_sweep(&spec, &grid, &g, &g, &config).unwrap();
        for row in &out.rows {
            assert!(row.sup_norm.unwrap() <= 1e-12, "{row:?}");
            assert!((row.entropy_norm - out.target_entropy).abs() <= 1e-9 * out.target_entropy);
        }
        assert!(!out.monotone_divergence);
    }
}
