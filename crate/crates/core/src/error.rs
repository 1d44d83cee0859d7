use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The eigenvalue tuple failed one of the cone functionals.
    #[error("point outside cone {cone}: {test}{}", point_suffix(.point))]
    ConeViolation {
        cone: String,
        test: String,
        point: Option<usize>,
    },

    #[error("degenerate point on the boundary of cone {cone}: {test}")]
    DegeneratePoint { cone: String, test: String },

    #[error("metric is not positive definite (pivot {pivot:.3e})")]
    MetricDegeneracy { pivot: f64 },

    #[error("unsupported complex dimension n = {0}")]
    UnsupportedDimension(usize),

    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    #[error("no convergence after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("initial guess violates the cone constraint at grid point {point}")]
    InfeasibleStart { point: usize },

    #[error("chart construction failed: {0}")]
    ChartFailure(String),

    #[error("auxiliary Hessian lost positivity: {0}")]
    Degeneracy(String),

    #[error("parse error: {0}")]
    Parse(String),
}

fn point_suffix(point: &Option<usize>) -> String {
    match point {
        Some(p) => format!(" at grid point {p}"),
        None => String::new(),
    }
}
