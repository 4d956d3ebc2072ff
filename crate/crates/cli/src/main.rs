//! `dplr`: generate data, run the private protocol, audit privacy loss,
//! compute budgets and sweep schedules from an INI experiment config.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 audit, regime or
//! threshold failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dplr",
    version,
    about = "Differentially private decentralized linear regression experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Experiment config (INI with [graph] [data] [schedule] [omega] [run] sections).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory. Falls back to `[run] output_dir`, then $DPLR_OUTPUT_DIR, then `dplr-out`.
    #[arg(short, long)]
    pub output_dir: Option<PathBuf>,
    /// Overwrite existing output files (outputs are never appended to).
    #[arg(long)]
    pub force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the graph and dataset files; print adjacency bounds and the pooled solution.
    Generate(Common),
    /// Run R trials and write the trajectory dump and mean error series.
    Run {
        #[command(flatten)]
        common: Common,
        /// Noisy, projected protocol (default).
        #[arg(long, conflicts_with = "baseline")]
        private: bool,
        /// Noiseless, unprojected consensus gradient descent.
        #[arg(long)]
        baseline: bool,
        /// Publish exact states (no Laplace noise) in the private protocol.
        #[arg(long, conflicts_with = "baseline")]
        zero_noise: bool,
        /// Dump the trajectory of every trial instead of only the first.
        #[arg(long)]
        dump_all: bool,
    },
    /// Audit realized privacy loss against the per-step bounds on an adjacent pair.
    Audit {
        #[command(flatten)]
        common: Common,
        /// 1-based node whose data is replaced (overrides `[audit] node`).
        #[arg(long)]
        node: Option<usize>,
        /// identical | negate-labels | negate-design | reverse-labels | zero-labels (overrides `[audit] perturb`).
        #[arg(long)]
        perturb: Option<String>,
        /// Also run the histogram DP check with this many trials per dataset.
        #[arg(long)]
        monte_carlo: Option<usize>,
        /// Histogram cells per coordinate for --monte-carlo.
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Print the closed-form privacy budget and the sum of per-step bounds.
    Budget(BudgetArgs),
    /// Evaluate every point of the cartesian product of the listed schedule values.
    Sweep(Common),
}

#[derive(Args, Debug)]
pub struct BudgetArgs {
    #[arg(long)]
    pub c_alpha: f64,
    #[arg(long)]
    pub d_alpha: f64,
    #[arg(long)]
    pub e_alpha: f64,
    #[arg(long)]
    pub c_v: f64,
    #[arg(long)]
    pub d_v: f64,
    #[arg(long)]
    pub e_v: f64,
    /// Number of releases T.
    #[arg(long)]
    pub rounds: usize,
    /// Feature dimension m.
    #[arg(long)]
    pub features: usize,
    /// Number of nodes k.
    #[arg(long)]
    pub nodes: usize,
    /// Largest local row count n_M.
    #[arg(long)]
    pub max_rows: usize,
    #[arg(long)]
    pub delta_x: f64,
    #[arg(long)]
    pub delta_y: f64,
    #[arg(long)]
    pub b_omega: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(common) => commands::generate(&common),
        Command::Run {
            common,
            private: _,
            baseline,
            zero_noise,
            dump_all,
        } => commands::run(&common, baseline, zero_noise, dump_all),
        Command::Audit {
            common,
            node,
            perturb,
            monte_carlo,
            bins,
        } => commands::audit(&common, node, perturb.as_deref(), monte_carlo, bins),
        Command::Budget(args) => commands::budget(&args),
        Command::Sweep(common) => commands::sweep(&common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
