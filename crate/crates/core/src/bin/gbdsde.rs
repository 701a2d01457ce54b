use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gbdsde::config::{ExperimentConfig, SuiteName};
use gbdsde::error::Error;
use gbdsde::suite::{run_suite_with, Overrides};

const DEFAULT_CONFIG: &str = include_str!("../../configs/default.toml");

#[derive(Parser)]
#[command(name = "gbdsde", version, about = "Reflected BDSDE solvers and their verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; the shipped default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the reflected diffusion and its boundary process.
    SimulateReflected(Common),
    /// Solve the configured equation by least-squares Monte Carlo.
    SolveBdsde {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        /// Solution CSV (default: <out-dir>/solution.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the stochastic flow and its inverse.
    VerifyFlow(Common),
    /// Residual refinement of the Ito and Ito-Ventzell formulas.
    VerifyCalculus(Common),
    /// Estimate u(t, x) and v(t, x) on the configured field grid.
    Field(Common),
    /// Run the acceptance criteria.
    Acceptance(Common),
}

fn run(cli: Cli) -> Result<bool, Error> {
    let (suite, common, mut overrides) = match cli.command {
        Command::SimulateReflected(c) => (SuiteName::SimulateReflected, c, Overrides::default()),
        Command::SolveBdsde { common, scenarios, dt, out } => {
            (SuiteName::SolveBdsde, common, Overrides { scenarios, dt, out, ..Default::default() })
        }
        Command::VerifyFlow(c) => (SuiteName::VerifyFlow, c, Overrides::default()),
        Command::VerifyCalculus(c) => (SuiteName::VerifyCalculus, c, Overrides::default()),
        Command::Field(c) => (SuiteName::Field, c, Overrides::default()),
        Command::Acceptance(c) => (SuiteName::Acceptance, c, Overrides::default()),
    };
    overrides.suite = Some(suite);
    overrides.seed = common.seed;
    overrides.out_dir = common.out_dir;
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_toml_str(DEFAULT_CONFIG)?,
    };
    if let Some(w) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--workers: {e}")))?;
    }
    let outcome = run_suite_with(&cfg, &overrides, |o| println!("{}", o.line()))?;
    if outcome.acceptance.is_empty() {
        for r in &outcome.results {
            println!("{}", r.line());
        }
    }
    println!(
        "{} {}: report written to {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        suite.as_str(),
        outcome.report.display()
    );
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
