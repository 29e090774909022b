//! `darp` — batch front end for pseudo-label refinement.
//!
//! Five subcommands cover the full workflow: `simulate` generates seeded
//! long-tailed scenarios, `build-confusion` and `estimate` recover target
//! class totals from a validation split, `refine` projects a pseudo-label
//! matrix onto those totals, and `evaluate` scores the result. Matrices
//! travel as CSV, reports and manifests as JSON; every command is a
//! deterministic function of its inputs and flags.

mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;

use commands::{BuildConfusionArgs, EstimateArgs, EvaluateArgs, RefineArgs, SimulateArgs};

#[derive(Parser)]
#[command(
    name = "darp",
    version,
    about = "Align pseudo-label class totals with target marginals"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Subcommand)]
enum Cmd {
    /// Project a pseudo-label matrix onto target class totals
    Refine(RefineArgs),
    /// Estimate class totals from a confusion matrix and aggregated predictions
    Estimate(EstimateArgs),
    /// Average per-class soft predictions into a confusion matrix
    BuildConfusion(BuildConfusionArgs),
    /// Generate a seeded long-tailed pseudo-label scenario
    Simulate(SimulateArgs),
    /// Score predictions against ground-truth labels
    Evaluate(EvaluateArgs),
}

/// Exit contract: 0 success, 1 input or parse problems, 2 solver-level
/// failures (infeasible support, stalled or non-convergent scaling),
/// 3 numerically singular confusion matrix. Pipelines branch on these.
fn exit_for(err: &darp_core::Error) -> u8 {
    use darp_core::Error;
    match err {
        Error::Infeasible { .. }
        | Error::NonConvergence { .. }
        | Error::DegenerateRow { .. }
        | Error::DegenerateColumn { .. } => 2,
        Error::SingularConfusion { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version surface as Err here; they print to stdout
            // and exit 0. Real usage errors go to stderr and exit 1, keeping
            // code 2 reserved for solver outcomes.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Cmd::Refine(args) => commands::refine(args),
        Cmd::Estimate(args) => commands::estimate(args),
        Cmd::BuildConfusion(args) => commands::build_confusion(args),
        Cmd::Simulate(args) => commands::simulate(args),
        Cmd::Evaluate(args) => commands::evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
