//! `wearec` command-line interface.

mod artifacts;
mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wearec::data::Split;

use commands::Locations;
use failure::Failure;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "wearec", version, about = "Sequential recommendation with frequency filtering and wavelet enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CheckpointArgs {
    /// Trained checkpoint; its header carries the training config.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file, if it moved since training.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (default: the checkpoint's directory).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl CheckpointArgs {
    fn locations(self) -> Locations {
        Locations {
            checkpoint: self.checkpoint,
            data: self.data,
            output: self.output,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Filter a raw sequence file and write the dataset, split dumps and stats.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_core: usize,
        /// Window length used for the split dumps.
        #[arg(long, default_value_t = 50)]
        max_len: usize,
    },
    /// Train with early stopping; writes checkpoint.bin, history.csv, metrics.json.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[command(flatten)]
        ckpt: CheckpointArgs,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Per-band attribution of correct predictions (freqdrivers.csv).
    AnalyzeFreq {
        #[command(flatten)]
        ckpt: CheckpointArgs,
        /// Band count, or explicit ranges such as `0-0,1-5,6-25`.
        #[arg(long)]
        bands: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Learned filter magnitudes per layer, head and bin (spectra.csv).
    ExportSpectra {
        #[command(flatten)]
        ckpt: CheckpointArgs,
    },
    /// Learned enhancer values (enhancer.csv).
    ExportEnhancer {
        #[command(flatten)]
        ckpt: CheckpointArgs,
    },
    /// Finite-difference check of the full model's gradients.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mixing-layer runtime against sequence length.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Prepare {
            input,
            output,
            min_core,
            max_len,
        } => commands::prepare(&input, &output, min_core, max_len),
        Command::Train { config } => commands::train(&config),
        Command::Eval { ckpt, split } => commands::eval(&ckpt.locations(), split),
        Command::AnalyzeFreq { ckpt, bands, k } => commands::analyze_freq(&ckpt.locations(), bands.as_deref(), k),
        Command::ExportSpectra { ckpt } => commands::export_spectra(&ckpt.locations()),
        Command::ExportEnhancer { ckpt } => commands::export_enhancer_cmd(&ckpt.locations()),
        Command::Gradcheck { config } => commands::gradcheck(&config),
        Command::Bench { config } => commands::bench(&config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
