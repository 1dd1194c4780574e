//! `reshoot`: dataset rendering, training, sampling, evaluation and
//! ablations from one binary.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reshoot::Error;

#[derive(Parser)]
#[command(name = "reshoot", version, about = "Camera-controlled video re-rendering at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// override a config key, e.g. `--set model.dim=64`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// overrides every seed in the config
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synchronized multi-camera dataset
    RenderDataset(Common),
    /// Pretrain the base model or fine-tune a camera-controlled one
    Train(Common),
    /// Generate one video from a checkpoint
    Sample(Common),
    /// Score a checkpoint on the held-out split
    Eval(Common),
    /// Run the conditioning or training-strategy comparison
    Ablate(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Numeric(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RenderDataset(c) => commands::render_dataset(c),
        Command::Train(c) => commands::train(c),
        Command::Sample(c) => commands::sample(c),
        Command::Eval(c) => commands::eval(c),
        Command::Ablate(c) => commands::ablate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
