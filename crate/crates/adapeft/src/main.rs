//! Thin command-line front end over [`adapeft::commands`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adapeft::commands::{self, CommandError};
use adapeft::config::{FrontierMode, RenderKind, SolverKind};

#[derive(Parser)]
#[command(
    name = "adapeft",
    version,
    about = "Influence-driven selection of trainable parameter groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured training simulation and write its trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Solve the group-selection knapsack recorded in a trace.
    Select {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// greedy, dp, exhaustive or mitm.
        #[arg(long, default_value = "greedy")]
        solver: String,
        #[arg(long)]
        json: bool,
    },
    /// Emit the (weight fraction, value) frontier of a trace.
    Frontier {
        #[arg(long)]
        trace: PathBuf,
        /// exact or greedy.
        #[arg(long, default_value = "exact")]
        mode: String,
        #[arg(long)]
        json: bool,
    },
    /// Select groups on a small run and train the large model under them.
    Transfer {
        /// Small run: a config JSON or a finished .ppitrace file.
        #[arg(long)]
        small: PathBuf,
        #[arg(long)]
        large: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        iters: u64,
        /// Share of the large run spent on the small selection run.
        #[arg(long, default_value_t = 0.1)]
        budget: f64,
        /// Also train a full-model baseline for comparison.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        json: bool,
    },
    /// Render a trace to a heatmap (TSV or SVG) or cumulative-influence TSV.
    Render {
        /// heatmap or appi.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn report<T: serde::Serialize>(value: &T, human: String, json: bool) -> Result<(), CommandError> {
    if json {
        let text =
            serde_json::to_string_pretty(value).map_err(|e| CommandError::Config(e.to_string()))?;
        println!("{text}");
    } else {
        print!("{human}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Simulate { config, out, json } => {
            let config = commands::load_config(&config)?;
            let result = commands::simulate(&config, &out)?;
            report(&result, result.human(), json)
        }
        Command::Select {
            trace,
            epsilon,
            solver,
            json,
        } => {
            let solver: SolverKind = solver.parse()?;
            let result = commands::select(&trace, epsilon, solver)?;
            report(&result, result.human(), json)
        }
        Command::Frontier { trace, mode, json } => {
            let mode: FrontierMode = mode.parse()?;
            let result = commands::frontier(&trace, mode)?;
            report(&result, result.human(), json)
        }
        Command::Transfer {
            small,
            large,
            epsilon,
            iters,
            budget,
            baseline,
            json,
        } => {
            let result = commands::transfer(&small, &large, epsilon, iters, budget, baseline)?;
            report(&result, result.human(), json)
        }
        Command::Render {
            kind,
            trace,
            out,
            json,
        } => {
            let kind: RenderKind = kind.parse()?;
            let result = commands::render(kind, &trace, &out)?;
            report(&result, result.human(), json)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
