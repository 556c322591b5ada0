mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, OUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "umixer", version, about = "Train, evaluate and probe U-Mixer forecasters")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable (e.g. --set levels=2).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    /// Output directory; overrides the config and UMIXER_OUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per configured horizon and write checkpoints.
    Train,
    /// Score checkpoints on the test segment.
    Evaluate {
        /// Checkpoint to score; defaults to checkpoint_h{H}.bin per horizon in the output directory.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
    /// Forecast the steps following the last input_len rows of a CSV.
    Forecast {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Optional CSV of true future values, copied into the plot data.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compare the full model against variants without the Unet and without the correction.
    Ablate,
    /// Grid over levels and patch lengths.
    Sweep,
    /// Finite-difference check of every model gradient.
    Gradcheck,
    /// Run the fast built-in oracle checks.
    Selftest,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = RunConfig::resolve(
        cli.config.as_deref(),
        &cli.sets,
        cli.out.as_deref(),
        std::env::var(OUT_DIR_ENV).ok(),
    )
    .and_then(|cfg| match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Evaluate { checkpoint } => commands::evaluate(&cfg, &checkpoint),
        Command::Forecast {
            input,
            checkpoint,
            truth,
        } => commands::forecast(&cfg, &input, checkpoint.as_deref(), truth.as_deref()),
        Command::Ablate => commands::ablate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Gradcheck => commands::gradcheck(&cfg),
        Command::Selftest => commands::selftest(),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
