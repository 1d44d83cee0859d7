//! Experiment descriptors read from TOML.

use std::str::FromStr;

use c0_estimate::generators::{ForcingFamily, MetricGenerator, TrigField};
use c0_estimate::grid::TorusGrid;
use c0_estimate::solver::{Manufactured, PrimaryProblem};
use c0_estimate::symfun::{OperatorDescriptor, OperatorSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDescriptor {
    #[serde(serialize_with = "write_operator", deserialize_with = "read_operator")]
    pub operator: OperatorDescriptor,
    pub grid: GridDescriptor,
    #[serde(default)]
    pub metric: MetricGenerator,
    #[serde(default)]
    pub metric_h: MetricGenerator,
    pub forcing: ForcingSource,
    #[serde(default = "default_s_list")]
    pub s_list: Vec<f64>,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<u32>,
    /// Entropy exponent, must exceed `n`.
    pub p: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    pub n: usize,
    /// Points per real axis.
    #[serde(rename = "N")]
    pub points: usize,
    /// Torus period.
    #[serde(rename = "L", default = "unit")]
    pub period: f64,
}

/// Where `F` comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSource {
    /// Computed from a known cosine potential and constant `b`.
    Manufactured { amplitude: f64, b: f64 },
    /// A named family; `solve` and `localize` use the first parameter.
    Family { family: ForcingFamily, parameters: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solver: f64,
    pub max_iterations: usize,
    pub c_disc: f64,
    /// Random draws per pointwise suite.
    pub samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { solver: 1e-8, max_iterations: 50, c_disc: 10.0, samples: 10_000 }
    }
}

fn default_s_list() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_k_list() -> Vec<u32> {
    vec![10, 100]
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn write_operator<S: Serializer>(op: &OperatorDescriptor, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(op)
}

fn read_operator<'de, D: Deserializer<'de>>(d: D) -> Result<OperatorDescriptor, D::Error> {
    let text = String::deserialize(d)?;
    OperatorDescriptor::from_str(&text).map_err(serde::de::Error::custom)
}

impl Default for ExperimentDescriptor {
    fn default() -> Self {
        Self {
            operator: OperatorDescriptor::MongeAmpere,
            grid: GridDescriptor { n: 2, points: 12, period: 1.0 },
            metric: MetricGenerator::Wave { amplitude: 0.2, mode: 1, phase: 0.0 },
            metric_h: MetricGenerator::Wave { amplitude: 0.3, mode: 1, phase: 1.0 },
            forcing: ForcingSource::Manufactured { amplitude: 0.01, b: 0.3 },
            s_list: default_s_list(),
            k_list: default_k_list(),
            p: 3.0,
            tolerances: Tolerances::default(),
            seed: 0,
            workers: 1,
        }
    }
}

impl ExperimentDescriptor {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let d: Self = toml::from_str(text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let n = self.grid.n;
        self.operator.build(n)?;
        self.grid()?;
        self.metric.validate()?;
        self.metric_h.validate()?;
        anyhow::ensure!(self.p > n as f64, "entropy exponent p = {} must exceed n = {n}", self.p);
        anyhow::ensure!(
            self.s_list.iter().all(|&s| s > 0.0 && s <= 1.0),
            "s_list entries must lie in (0, 1]"
        );
        anyhow::ensure!(self.k_list.iter().all(|&k| k >= 1), "k_list entries must be at least 1");
        anyhow::ensure!(self.tolerances.solver > 0.0, "solver tolerance must be positive");
        anyhow::ensure!(self.tolerances.max_iterations > 0, "max_iterations must be positive");
        anyhow::ensure!(self.tolerances.samples > 0, "samples must be positive");
        anyhow::ensure!(self.workers > 0, "workers must be positive");
        if let ForcingSource::Family { parameters, .. } = &self.forcing {
            anyhow::ensure!(!parameters.is_empty(), "forcing family needs at least one parameter");
        }
        Ok(())
    }

    pub fn spec(&self) -> anyhow::Result<OperatorSpec> {
        Ok(self.operator.build(self.grid.n)?)
    }

    pub fn grid(&self) -> anyhow::Result<TorusGrid> {
        Ok(TorusGrid::new(self.grid.n, self.grid.points, self.grid.period)?)
    }

    /// Primary problem for the first forcing member, with the exact potential when manufactured.
    pub fn problem(&self) -> anyhow::Result<(PrimaryProblem, Option<Manufactured>)> {
        let grid = self.grid()?;
        let spec = self.spec()?;
        let (problem, exact) = match &self.forcing {
            ForcingSource::Manufactured { amplitude, b } => {
                let potential = TrigField::manufactured(grid.n, *amplitude);
                let m = Manufactured::new(spec, grid, &self.metric, &self.metric_h, &potential, *b)?;
                (m.problem.clone(), Some(m))
            }
            ForcingSource::Family { family, parameters } => {
                let forcing = family.sample(&grid, parameters[0], self.seed)?;
                let g = self.metric.field(&grid)?;
                let g_h = self.metric_h.field(&grid)?;
                (PrimaryProblem::new(spec, grid, g, g_h, forcing)?, None)
            }
        };
        Ok((
            problem
                .with_tolerance(self.tolerances.solver)
                .with_max_iterations(self.tolerances.max_iterations),
            exact,
        ))
    }
}
