//! `vitforge` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 numerical failure during training.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{ImportArgs, TrainArgs};
use config::RunConfig;
use data::Manifests;

/// Bad flags, config files or arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "vitforge", version, about = "Vision Transformer training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write stratified train.csv and test.csv manifests for a dataset directory.
    Split {
        /// Directory containing labels.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = config::DEFAULT_SPLIT_RATIO)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (defaults to the data directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write a run directory.
    Train {
        /// JSON run config; flags override its keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory or packed .ckpt fixture.
        #[arg(long)]
        data: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to start from instead of random initialization.
        #[arg(long)]
        init_weights: Option<PathBuf>,
        /// Accept a differently shaped head in --init-weights and reinitialize it.
        #[arg(long)]
        reinit_head: bool,
        #[arg(long)]
        train_manifest: Option<PathBuf>,
        #[arg(long)]
        test_manifest: Option<PathBuf>,
        #[command(flatten)]
        overrides: RunConfig,
    },
    /// Print a metrics report for a checkpoint as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory or packed .ckpt fixture.
        #[arg(long)]
        data: PathBuf,
        /// Manifest to evaluate (defaults to test.csv, then labels.csv).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    /// Classify a single image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Validate external weights against a config and write a checkpoint.
    ImportWeights {
        #[arg(long = "in")]
        input: PathBuf,
        /// JSON run config describing the target architecture.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Replace the classification head with a fresh one.
        #[arg(long)]
        reinit_head: bool,
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        preset: Option<String>,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("VITFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| UsageError(format!("VITFORGE_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("cannot size the thread pool: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Split { data, ratio, seed, out } => commands::split(&data, ratio, seed, out.as_deref()),
        Command::Train {
            config,
            data,
            out,
            init_weights,
            reinit_head,
            train_manifest,
            test_manifest,
            overrides,
        } => commands::train(TrainArgs {
            config,
            data,
            out,
            init_weights,
            reinit_head,
            manifests: Manifests {
                train: train_manifest,
                test: test_manifest,
            },
            overrides,
        }),
        Command::Eval {
            checkpoint,
            data,
            manifest,
            batch_size,
        } => {
            if batch_size == 0 {
                return Err(UsageError("--batch-size must be positive".into()).into());
            }
            commands::eval(&checkpoint, &data, manifest.as_deref(), batch_size)
        }
        Command::Predict { checkpoint, image } => {
            let p = commands::predict_image(&checkpoint, &image)?;
            println!("{}", serde_json::to_string(&p)?);
            Ok(())
        }
        Command::ImportWeights {
            input,
            config,
            out,
            reinit_head,
            num_classes,
            seed,
            preset,
        } => commands::import_weights(ImportArgs {
            input,
            config,
            out,
            reinit_head,
            num_classes,
            seed,
            overrides: RunConfig {
                preset,
                ..Default::default()
            },
        }),
    }
}

/// Maps an error chain onto the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<vitforge::Error>() {
            return match e {
                vitforge::Error::Config(_) => 1,
                vitforge::Error::Numerical(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
