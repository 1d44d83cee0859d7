use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use c0_estimate::auxiliary::{run_local_pipeline, LocalReport, PipelineOptions};
use c0_estimate::solver::{l1_bound_check, solve_primary, L1Report};
use c0_estimate::sweep::{run_sweep, SweepConfig, SweepSummary};
use c0_estimate::Error;
use serde::{Deserialize, Serialize};

use crate::checks::{run_pointwise, PointwiseReport};
use crate::descriptor::{ExperimentDescriptor, ForcingSource, GridDescriptor};

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CheckFailure = 1,
    Usage = 2,
    NonConvergence = 3,
}

impl Status {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Self::Pass
        } else {
            Self::CheckFailure
        }
    }
}

/// Exit status for a failed command.
pub fn exit_status(error: &anyhow::Error) -> Status {
    match error.downcast_ref::<Error>() {
        Some(Error::NonConvergence { .. } | Error::InfeasibleStart { .. }) => Status::NonConvergence,
        Some(Error::ChartFailure(_) | Error::Degeneracy(_)) => Status::CheckFailure,
        _ => Status::Usage,
    }
}

pub type Outcome = anyhow::Result<Status>;

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn check_pointwise(d: &ExperimentDescriptor, out: &Path) -> Outcome {
    let report = run_pointwise(&d.spec()?, &d.operator.to_string(), d.tolerances.samples, d.seed)?;
    write_json(out, "check_pointwise.json", &report)?;
    Ok(Status::from_pass(report.pass))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedError {
    pub sup_error: f64,
    pub b_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub operator: String,
    pub grid: GridDescriptor,
    pub converged: bool,
    pub b: Option<f64>,
    pub residual_sup: Option<f64>,
    pub iterations: Option<usize>,
    pub sup_norm: Option<f64>,
    pub l1: Option<L1Report>,
    pub manufactured: Option<ManufacturedError>,
    /// Residual history of a failed solve.
    pub history: Vec<f64>,
    pub error: Option<String>,
}

pub fn solve(d: &ExperimentDescriptor, out: &Path) -> Outcome {
    let (problem, exact) = d.problem()?;
    let mut report = SolveReport {
        operator: d.operator.to_string(),
        grid: d.grid,
        converged: false,
        b: None,
        residual_sup: None,
        iterations: None,
        sup_norm: None,
        l1: None,
        manufactured: None,
        history: Vec::new(),
        error: None,
    };
    let sol = match solve_primary(&problem, None) {
        Ok(sol) => sol,
        Err(e) => {
            if let Error::NonConvergence { history, .. } = &e {
                report.history = history.clone();
            }
            report.error = Some(e.to_string());
            write_json(out, "solve.json", &report)?;
            return Err(e.into());
        }
    };
    let l1 = l1_bound_check(&problem.grid, &sol.phi, &problem.g, &problem.g_h)?;
    sol.phi.write_binary(create(out, "phi.bin")?)?;
    sol.phi.write_csv(&problem.grid, create(out, "phi.csv")?)?;
    sol.write_history_csv(create(out, "history.csv")?)?;
    report.converged = true;
    report.b = Some(sol.b);
    report.residual_sup = Some(sol.residual_sup);
    report.iterations = Some(sol.iterations);
    report.sup_norm = Some(sol.phi.sup_norm());
    report.manufactured = exact.map(|m| ManufacturedError { sup_error: m.sup_error(&sol.phi), b_error: (sol.b - m.b).abs() });
    let pass = l1.pass;
    report.l1 = Some(l1);
    write_json(out, "solve.json", &report)?;
    Ok(Status::from_pass(pass))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeReport {
    pub operator: String,
    pub grid: GridDescriptor,
    pub report: Option<LocalReport>,
    pub error: Option<String>,
    pub pass: bool,
}

pub fn localize(d: &ExperimentDescriptor, out: &Path) -> Outcome {
    let (problem, _) = d.problem()?;
    let sol = solve_primary(&problem, None)?;
    let mut options = PipelineOptions::for_dimension(d.grid.n);
    options.c_disc = d.tolerances.c_disc;
    options.entropy_p = d.p;
    options.workers = d.workers;
    let mut summary = LocalizeReport {
        operator: d.operator.to_string(),
        grid: d.grid,
        report: None,
        error: None,
        pass: false,
    };
    let local = match run_local_pipeline(&sol, &problem, &d.s_list, &d.k_list, &options) {
        Ok(r) => r,
        Err(e) => {
            summary.error = Some(e.to_string());
            write_json(out, "localize.json", &summary)?;
            return Err(e.into());
        }
    };
    let mut csv = create(out, "comparisons.csv")?;
    writeln!(csv, "s_fraction,k,s,A_sk,epsilon,max_phi,tau_disc,pass,mass_error,critical_scale,error")?;
    for entry in &local.entries {
        let tag = format!("comparison_s{}_k{}.json", entry.s_fraction, entry.k);
        match &entry.report {
            Some(r) => {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},",
                    entry.s_fraction, entry.k, r.s, r.a_sk, r.epsilon, r.max_phi, r.tau_disc, r.pass, r.mass_error, r.critical_scale
                )?;
                write_json(out, &tag, r)?;
            }
            None => writeln!(csv, "{},{},,,,,,false,,,\"{}\"", entry.s_fraction, entry.k, opt(&entry.error))?,
        }
    }
    csv.flush()?;
    summary.pass = local.all_pass;
    summary.report = Some(local);
    write_json(out, "localize.json", &summary)?;
    Ok(Status::from_pass(summary.pass))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub operator: String,
    pub grid: GridDescriptor,
    pub entropy_p: f64,
    pub summary: SweepSummary,
    pub pass: bool,
}

pub fn sweep(d: &ExperimentDescriptor, out: &Path) -> Outcome {
    let ForcingSource::Family { family, parameters } = &d.forcing else {
        anyhow::bail!("sweep needs a forcing family with a parameter list");
    };
    let grid = d.grid()?;
    let config = SweepConfig {
        family: family.clone(),
        parameters: parameters.clone(),
        entropy_p: d.p,
        target_entropy: None,
        seed: d.seed,
        workers: d.workers,
        tolerance: d.tolerances.solver,
        max_iterations: d.tolerances.max_iterations,
    };
    let summary = run_sweep(&d.spec()?, &grid, &d.metric.field(&grid)?, &d.metric_h.field(&grid)?, &config)?;
    let mut csv = create(out, "sweep.csv")?;
    writeln!(csv, "parameter,shift,entropy_norm,sup_norm,b,iterations,residual_sup,laplacian_margin,l1_pass,error")?;
    for r in &summary.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},\"{}\"",
            r.parameter,
            r.shift,
            r.entropy_norm,
            opt(&r.sup_norm),
            opt(&r.b),
            opt(&r.iterations),
            opt(&r.residual_sup),
            opt(&r.laplacian_margin),
            opt(&r.l1_pass),
            opt(&r.error)
        )?;
    }
    csv.flush()?;
    let pass = summary.failures < summary.rows.len() && !summary.monotone_divergence;
    let report = SweepReport { operator: d.operator.to_string(), grid: d.grid, entropy_p: d.p, summary, pass };
    write_json(out, "sweep.json", &report)?;
    Ok(Status::from_pass(pass))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub name: String,
    pub file: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sections: Vec<ReportSection>,
    pub pass: bool,
}

fn read<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> anyhow::Result<Option<T>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

/// Collects the reports found in `out` into `report.json` and a text table.
pub fn report(out: &Path) -> Outcome {
    let mut sections = Vec::new();
    if let Some(r) = read::<PointwiseReport>(out, "check_pointwise.json")? {
        let failing: Vec<&str> = r.suites.iter().filter(|s| !s.pass).map(|s| s.name.as_str()).collect();
        sections.push(ReportSection {
            name: "check-pointwise".into(),
            file: "check_pointwise.json".into(),
            pass: r.pass,
            detail: format!("{} n={}, {} suites, failing {:?}", r.operator, r.n, r.suites.len(), failing),
        });
    }
    if let Some(r) = read::<SolveReport>(out, "solve.json")? {
        let detail = match (&r.error, r.b, r.residual_sup) {
            (Some(e), _, _) => e.clone(),
            (None, Some(b), Some(res)) => format!("b = {b:.6e}, residual {res:.2e}, sup |phi| {:.4e}", r.sup_norm.unwrap_or(0.0)),
            _ => String::new(),
        };
        sections.push(ReportSection {
            name: "solve".into(),
            file: "solve.json".into(),
            pass: r.converged && r.l1.as_ref().is_some_and(|l| l.pass),
            detail,
        });
    }
    if let Some(r) = read::<LocalizeReport>(out, "localize.json")? {
        let detail = match (&r.error, &r.report) {
            (Some(e), _) => e.clone(),
            (None, Some(l)) => {
                let worst = l.entries.iter().filter_map(|e| e.report.as_ref()).map(|c| c.max_phi).fold(f64::NEG_INFINITY, f64::max);
                format!("{} pairs, max Phi {worst:.3e}", l.entries.len())
            }
            _ => String::new(),
        };
        sections.push(ReportSection { name: "localize".into(), file: "localize.json".into(), pass: r.pass, detail });
    }
    if let Some(r) = read::<SweepReport>(out, "sweep.json")? {
        sections.push(ReportSection {
            name: "sweep".into(),
            file: "sweep.json".into(),
            pass: r.pass,
            detail: format!(
                "{} members, sup ratio {}, monotone divergence {}, failures {}",
                r.summary.rows.len(),
                r.summary.sup_ratio.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                r.summary.monotone_divergence,
                r.summary.failures
            ),
        });
    }
    if sections.is_empty() {
        anyhow::bail!("no reports found in {}", out.display());
    }
    for s in &sections {
        println!("{:<16} {:<4}  {}", s.name, if s.pass { "PASS" } else { "FAIL" }, s.detail);
    }
    let pass = sections.iter().all(|s| s.pass);
    write_json(out, "report.json", &RunReport { sections, pass })?;
    Ok(Status::from_pass(pass))
}
