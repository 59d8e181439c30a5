//! `tristate`: key rates, protocol simulation, bound checks and four-state
//! audits for three-state QKD sources.
//!
//! Exit status: 0 on success, 1 for a valid input with a negative verdict
//! (no key, abort, infeasible audit, failed check), 2 for invalid input.

mod commands;
mod formats;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tristate_core::audit::TAU_AUDIT;

use commands::{Suite, Verdict};
use output::{Emitter, Format};

#[derive(Parser, Debug)]
#[command(name = "tristate", version, about = "Finite-key analysis and simulation for three-state QKD sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format on stdout. Defaults to csv for sweeps, text otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Directory for JSON/CSV artifacts.
    #[arg(long, global = true, env = "TRISTATE_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Key length and failure bounds for a source and security configuration.
    Keyrate {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Runs the protocol once and reports flags, statistics and keys.
    Simulate {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo and exhaustive checks of the concentration bounds and
    /// sampling identities.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Decides whether four source states admit the basis-independence
    /// decomposition.
    Audit4 {
        #[arg(long)]
        states: PathBuf,
        /// Perturbation sweep, e.g. `d-phase=0:0.3:31`.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value_t = TAU_AUDIT)]
        tau: f64,
    },
    /// Key-rate curve over one configuration field, e.g. `delta=0:0.11:12`.
    Sweep {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sweep: String,
    },
}

fn run(cli: Cli) -> anyhow::Result<Verdict> {
    let default_format = if matches!(cli.command, Command::Sweep { .. }) { Format::Csv } else { Format::Text };
    let em = Emitter { format: cli.format.unwrap_or(default_format), out_dir: cli.out };
    match &cli.command {
        Command::Keyrate { states, config } => commands::keyrate(&em, states, config),
        Command::Simulate { states, config, channel, seed } => {
            commands::simulate(&em, states, config, channel.as_deref(), *seed)
        }
        Command::Verify { suite, seed } => commands::verify(&em, *suite, *seed),
        Command::Audit4 { states, sweep, tau } => commands::audit4(&em, states, sweep.as_deref(), *tau),
        Command::Sweep { states, config, sweep } => commands::sweep(&em, states, config, sweep),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Verdict::Positive) => ExitCode::SUCCESS,
        Ok(Verdict::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
