//! Command-line front end.
//!
//! Exit codes: 0 success, 1 tool error (bad config, IO), 2 the analysis ran
//! but reached a negative mathematical verdict. Outputs are byte-identical
//! across reruns and worker counts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{config_hash, load_config, Outcome, RunContext};

#[derive(Parser)]
#[command(name = "tailsum", version, about = "Tail asymptotics for weighted sums of heavy-tailed variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tail-class diagnostics (long-tail, dominated/consistent variation,
    /// subexponentiality, h-insensitivity)
    Diagnose(RunArgs),
    /// Build the piecewise-linear insensitivity function h
    ConstructH(RunArgs),
    /// Tail equivalence of sum / running max / positive-part sum /
    /// big-jump approximation under common random numbers
    Equivalence(RunArgs),
    /// Uniform shift-insensitivity of the convolution tail over the
    /// weight band
    ShiftCheck(RunArgs),
    /// Finite-horizon ruin probability against its asymptote
    Ruin(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON problem description
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV/JSON artifacts
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Master seed; recorded verbatim in every artifact
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    /// Monte Carlo replicates / paths
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    /// Worker threads (must not affect outputs; defaults to all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Verdict tolerance override
    #[arg(long)]
    tolerance: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::VerdictFailed(msg)) => {
            eprintln!("verdict: {msg}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let args = match &cli.command {
        Command::Diagnose(a)
        | Command::ConstructH(a)
        | Command::Equivalence(a)
        | Command::ShiftCheck(a)
        | Command::Ruin(a) => a,
    };
    let bytes = std::fs::read(&args.config)
        .map_err(|e| anyhow::anyhow!("reading config {}: {e}", args.config.display()))?;
    let ctx = RunContext {
        out_dir: args.out.clone(),
        seed: args.seed,
        samples: args.samples,
        tolerance: args.tolerance,
        config_hash: config_hash(&bytes),
    };

    let body = || -> anyhow::Result<Outcome> {
        match &cli.command {
            Command::Diagnose(a) => commands::run_diagnose(&load_config(&a.config)?, &ctx),
            Command::ConstructH(a) => commands::run_construct_h(&load_config(&a.config)?, &ctx),
            Command::Equivalence(a) => commands::run_equivalence(&load_config(&a.config)?, &ctx),
            Command::ShiftCheck(a) => commands::run_shift_check(&load_config(&a.config)?, &ctx),
            Command::Ruin(a) => commands::run_ruin(&load_config(&a.config)?, &ctx),
        }
    };

    match args.workers {
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()?
            .install(body),
        None => body(),
    }
}
