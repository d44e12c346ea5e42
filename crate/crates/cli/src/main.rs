mod commands;
mod config;
mod error;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

/// Finite-stage construction of a smooth circle map with a flat interval and
/// a wandering interval, with first-return analysis of its Cherry flow.
#[derive(Debug, Parser)]
#[command(name = "flatcircle", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of induction stages.
    #[arg(long, global = true)]
    stages: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Basin sample size.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Iteration budget, cover depth or trace periods, depending on the command.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Hit-time search limit.
    #[arg(long, global = true)]
    max_hit: Option<usize>,
    /// Keep the left end of the flat interval fixed.
    #[arg(long, global = true)]
    anchored: bool,
    /// Write the maps around the step out of this stage.
    #[arg(long, global = true)]
    dump_stage: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the construction and write checkpoints and certificate tables.
    Construct,
    /// Re-check the ten stage conditions of a checkpoint.
    Verify { checkpoint: PathBuf },
    /// Sink and attractor basin fractions.
    Basin { input: PathBuf },
    /// Preimages of the flat interval up to the given depth.
    Gapcover { input: PathBuf },
    /// Suspension trace as CSV and SVG.
    Trace {
        input: PathBuf,
        /// Starting point; defaults to the middle of the test interval.
        #[arg(long)]
        x0: Option<f64>,
    },
    /// Rotation number enclosure.
    Rotnum { input: PathBuf },
    /// Translation that tunes the rotation number to the configured target.
    Tune { input: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        out: cli.out.clone(),
        stages: cli.stages,
        seed: cli.seed,
        samples: cli.samples,
        iters: cli.iters,
        max_hit: cli.max_hit,
        anchored: cli.anchored,
    });
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Construct => commands::construct(&cfg, cli.dump_stage),
        Command::Verify { checkpoint } => commands::verify(checkpoint),
        Command::Basin { input } => commands::basin(&cfg, input),
        Command::Gapcover { input } => commands::gapcover(&cfg, input),
        Command::Trace { input, x0 } => commands::trace(&cfg, input, *x0),
        Command::Rotnum { input } => commands::rotnum(&cfg, input),
        Command::Tune { input } => commands::tune(&cfg, input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Core(c) => eprintln!("error [{}]: {c}", c.kind()),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
