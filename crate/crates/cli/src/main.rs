use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use c0_estimate_cli::commands::{self, exit_status, Outcome, Status};
use c0_estimate_cli::ExperimentDescriptor;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "c0est", version, about = "Solve, localize and sweep (n-1)-form equations on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator and Θ property suites at random points.
    CheckPointwise(Common),
    /// Solve the primary equation and dump φ, b and the residual history.
    Solve(Common),
    /// Run the local comparison pipeline on a solved instance.
    Localize(Common),
    /// Solve a forcing family at fixed entropy norm and tabulate sup norms.
    Sweep(Common),
    /// Summarize the reports found in the output directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the default descriptor as TOML.
    Config,
}

#[derive(Args)]
struct Common {
    /// Experiment descriptor (TOML); built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Grid points per real axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Newton residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentDescriptor> {
        let mut d = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentDescriptor::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentDescriptor::default(),
        };
        if let Some(seed) = self.seed {
            d.seed = seed;
        }
        if let Some(workers) = self.workers {
            d.workers = workers;
        }
        if let Some(points) = self.grid {
            d.grid.points = points;
        }
        if let Some(tol) = self.tol {
            d.tolerances.solver = tol;
        }
        d.validate()?;
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(d)
    }
}

fn run(cli: Cli) -> Outcome {
    let with = |c: &Common, f: fn(&ExperimentDescriptor, &std::path::Path) -> Outcome| f(&c.load()?, &c.out);
    match &cli.command {
        Command::CheckPointwise(c) => with(c, commands::check_pointwise),
        Command::Solve(c) => with(c, commands::solve),
        Command::Localize(c) => with(c, commands::localize),
        Command::Sweep(c) => with(c, commands::sweep),
        Command::Report { out } => commands::report(out),
        Command::Config => {
            print!("{}", ExperimentDescriptor::default().to_toml());
            Ok(Status::Pass)
        }
    }
}

fn main() -> ExitCode {
    let status = match run(Cli::parse()) {
        Ok(status) => status,
        Err(error) => {
            eprintln!("error: {error:#}");
            exit_status(&error)
        }
    };
    ExitCode::from(status as u8)
}
