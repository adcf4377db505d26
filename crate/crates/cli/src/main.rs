use std::path::PathBuf;
use std::process::ExitCode;

use ace_core::gradsuite::SuiteSizes;
use clap::{Parser, Subcommand};

/// Adaptive constrained equivariance experiments.
///
/// `ACE_SEED` overrides the config seed; `--set` overrides both.
#[derive(Parser)]
#[command(name = "ace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configured run and write trace.csv, checkpoint.bin, summary.json and plots.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `key=value`, repeatable; the value is parsed as a TOML literal.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check certificate orderings on random models; writes a CSV report.
    VerifyBounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Finite-difference checks of every op, layer and both Lagrangians.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature / channel width; 0 gives an empty (vacuous) suite.
        #[arg(long, default_value_t = SuiteSizes::default().width)]
        width: usize,
        #[arg(long, default_value_t = SuiteSizes::default().side)]
        side: usize,
        #[arg(long, default_value_t = SuiteSizes::default().set_size)]
        set_size: usize,
        /// Corrupts one backward rule to confirm the harness catches it.
        #[arg(long, hide = true)]
        fault_injection: bool,
    },
    /// One run per value of a parameter, aggregated into sweep.csv and sweep.svg.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// eta_d, gamma_init, epsilon or rho.
        #[arg(long)]
        param: String,
        /// Comma-separated numbers.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Redraw the trace plots from a trace.csv.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, set } => ace_cli::cmd_train(&config, &set),
        Command::VerifyBounds { config, set } => ace_cli::cmd_verify_bounds(&config, &set),
        Command::Gradcheck { seed, width, side, set_size, fault_injection } => {
            ace_cli::cmd_gradcheck(seed, SuiteSizes { width, side, set_size }, fault_injection)
        }
        Command::Sweep { config, param, values, set, jobs } => ace_cli::cmd_sweep(&config, &param, &values, &set, jobs),
        Command::Plot { trace, out } => ace_cli::cmd_plot(&trace, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
