mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Degree counting, solution finding and bubble diagnostics for the
/// fourth-order mean-field equation with Navier boundary conditions.
#[derive(Parser, Debug)]
#[command(name = "meanfield", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// key = value config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// ball[:R], shell[:r0,r1] or box[:L].
    #[arg(long, global = true)]
    pub domain: Option<String>,
    /// Parameter τ; accepts plain numbers or multiples of π² such as 32pi2.
    #[arg(long, global = true)]
    pub tau: Option<commands::Tau>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Radial nodes for radial meshes, points per axis for grids.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// corrected or literal.
    #[arg(long, global = true)]
    pub bubble_convention: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Euler characteristics of the barycenter strata and the degree per window.
    Euler {
        #[arg(long, allow_hyphen_values = true)]
        chi: Option<i64>,
        #[arg(long)]
        k_max: Option<u64>,
    },
    /// Newton solves from random starts, with Leray–Schauder indices.
    Solve {
        #[arg(long)]
        starts: Option<usize>,
        /// Also write the lowest-energy solution as a binary field.
        #[arg(long)]
        field_out: Option<PathBuf>,
    },
    /// Natural-parameter continuation across a τ interval.
    Continue {
        #[arg(long)]
        tau_lo: Option<commands::Tau>,
        #[arg(long)]
        tau_hi: Option<commands::Tau>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Energy of projected bubbles along a λ grid.
    BubbleScan {
        #[arg(long)]
        lambda_lo: Option<f64>,
        #[arg(long)]
        lambda_hi: Option<f64>,
        #[arg(long)]
        lambda_count: Option<usize>,
    },
    /// Moser–Trudinger gaps over random fields and the bubble family.
    MtCheck {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Modified gradient flow from a random start; trajectory as CSV.
    Flow {
        /// Energy norm of the random start.
        #[arg(long)]
        norm: Option<f64>,
        /// Stop at the first time I_τ reaches this level.
        #[arg(long, allow_hyphen_values = true)]
        level: Option<f64>,
        /// Trajectory CSV path; defaults to the report path with a .csv extension.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Critical points of the regularized barycenter function by multistart.
    FstarCensus {
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Nearest formal barycenter of e^u for a stored field.
    Project {
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        capture_radius: Option<f64>,
    },
    /// Index sum of the solutions found against the degree formula.
    DegreeCompare {
        #[arg(long)]
        starts: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
