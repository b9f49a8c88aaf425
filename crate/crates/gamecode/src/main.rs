use clap::{Parser, Subcommand};
use gamecode::commands::{self, parse_grid, Outcome, SimulateArgs};
use gamecode::config::{builtin_default, from_value, parse_config, BUILTIN_LABEL};
use gamecode::{CliError, EXIT_FAILURE, EXIT_OK};
use gamecode_core::GridSpec;
use std::path::PathBuf;
use std::process::ExitCode;

/// Stackelberg equilibrium solver and simulator for the data-collector /
/// adversary coding game.
#[derive(Debug, Parser)]
#[command(name = "gamecode", version)]
struct Cli {
    /// JSON run configuration. Without it the built-in default is used.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory. Overrides the config's output_dir and $GAMECODE_OUT.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the honest noise model's assumptions.
    ValidateNoise,
    /// Trade-off curve from the envelope formula against the brute-force oracle.
    Tradeoff {
        #[arg(long)]
        eta: Option<f64>,
        /// start:stop:step or a comma-separated list.
        #[arg(long, value_parser = parse_grid)]
        alphas: Option<GridSpec>,
    },
    /// Optimal threshold and equilibrium over the eta grid.
    Solve,
    /// Optimal adversary noise distribution.
    Adversary {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Monte Carlo simulation of the N-node game.
    Simulate {
        /// Atom list in the format written by `adversary`.
        #[arg(long, value_name = "FILE")]
        adversary: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Run the invariant suites; exits 1 if any fails.
    Verify,
    /// Tradeoff, solve, adversary and simulation for every node count.
    Sweep,
}

fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let run = match &cli.config {
        Some(path) => parse_config(path)?,
        None => from_value(
            builtin_default(),
            BUILTIN_LABEL,
            &std::env::current_dir().unwrap_or_default(),
        )?,
    };
    let dir = run.output_dir(cli.out.as_deref());
    match &cli.command {
        Command::ValidateNoise => commands::validate_noise(&run, &dir),
        Command::Tradeoff { eta, alphas } => commands::tradeoff(&run, &dir, *eta, alphas.as_ref()),
        Command::Solve => commands::solve(&run, &dir),
        Command::Adversary { alpha, eta } => commands::adversary(&run, &dir, *eta, *alpha),
        Command::Simulate {
            adversary,
            nodes,
            eta,
            alpha,
        } => commands::simulate(
            &run,
            &dir,
            SimulateArgs {
                adversary: adversary.as_deref(),
                nodes: *nodes,
                eta: *eta,
                alpha: *alpha,
            },
        ),
        Command::Verify => commands::verify(&run, &dir),
        Command::Sweep => commands::sweep(&run, &dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(outcome) => {
            for path in outcome.output.written() {
                println!("{}", path.display());
            }
            if outcome.ok {
                ExitCode::from(EXIT_OK as u8)
            } else {
                let msg = serde_json::json!({
                    "error": {
                        "kind": "check_failed",
                        "message": "one or more checks failed; see the report",
                        "exit_code": EXIT_FAILURE,
                    }
                });
                eprintln!("{msg}");
                ExitCode::from(EXIT_FAILURE as u8)
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
