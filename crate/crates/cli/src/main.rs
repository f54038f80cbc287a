//! `ergon` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ControllerKind, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

#[derive(Parser)]
#[command(name = "ergon", version, about = "Environments, MPPI and NPG: benchmarks, training and live control")]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Environment name (cartpole, pendulum, pointmass, reacher).
    #[arg(long)]
    env: Option<String>,
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject MPPI smoothing coefficients that need normalizing.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sampling throughput for each worker count.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated worker counts.
        #[arg(long, value_delimiter = ',')]
        workers: Option<Vec<usize>>,
        #[arg(long)]
        seconds: Option<f64>,
    },
    /// Natural policy gradient training.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Checkpoint directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Validate the config and print the resolved form without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Seeded MPPI episodes with success and timing statistics.
    Mpc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Roll out a checkpointed policy and write the trajectory as CSV.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory or policy file stem.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the live control loop for viewers.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
        /// host:port
        #[arg(long)]
        bind: Option<String>,
        #[arg(long, value_enum)]
        controller: Option<ControllerKind>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn base_config(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(env) = &c.env {
        if *env != cfg.env {
            // overrides in the file belong to the file's environment
            cfg.env_config = None;
        }
        cfg.env = env.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bench { common, workers, seconds } => {
            let mut cfg = base_config(&common)?;
            if let Some(w) = workers {
                cfg.bench.workers = w;
            }
            if let Some(s) = seconds {
                cfg.bench.seconds = s;
            }
            commands::bench(&cfg)
        }
        Command::Train {
            common,
            workers,
            iterations,
            resume,
            dry_run,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(i) = iterations {
                cfg.npg.iterations = i;
            }
            commands::train_cmd(&cfg, resume, dry_run)
        }
        Command::Mpc { common, workers, episodes } => {
            let mut cfg = base_config(&common)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(e) = episodes {
                cfg.mpc.episodes = e;
            }
            commands::mpc(&cfg, common.strict)
        }
        Command::Replay {
            common,
            checkpoint,
            episodes,
            steps,
        } => commands::replay(&base_config(&common)?, &checkpoint, episodes, steps),
        Command::Serve {
            common,
            workers,
            bind,
            controller,
            checkpoint,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(b) = bind {
                cfg.serve.bind = b;
            }
            if let Some(c) = controller {
                cfg.serve.controller = c;
            }
            if let Some(p) = checkpoint {
                cfg.serve.checkpoint = Some(p);
            }
            commands::serve_cmd(&cfg, common.strict)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
