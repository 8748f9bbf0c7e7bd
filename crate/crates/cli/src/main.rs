//! Subcommand driver: `gen` builds the synthetic corpus, `train` fits a
//! model variant, `eval` runs the mode x list-size grid, `bench` measures
//! single-threaded real-time factors.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime error.

mod run;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "catt", version, about = "Adaptive contextual biasing for streaming transducers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration (model, synth, train sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; execution is single-threaded (bench forces 1).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (four splits plus manifest).
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory for the dataset files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model variant on a generated dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory produced by `gen`.
        #[arg(long)]
        data: PathBuf,
        /// Model variant: catt, catt+ped or catt+eped.
        #[arg(long, default_value = "catt")]
        variant: String,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint over modes x bias-list sizes x test sets.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated decode modes.
        #[arg(long, value_delimiter = ',', default_value = "always-off,always-on")]
        mode: Vec<String>,
        /// Comma-separated bias list sizes.
        #[arg(long = "bias-n", value_delimiter = ',', default_value = "0,20")]
        bias_n: Vec<usize>,
        /// Use a fixed phrase file as the bias list for every utterance.
        #[arg(long)]
        bias_file: Option<PathBuf>,
        /// Report output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Write per-step decode traces (JSON lines). Requires exactly one
        /// mode and one bias-list size.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Benchmark decode real-time factor per mode (single thread).
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "always-off,always-on")]
        mode: Vec<String>,
        #[arg(long = "bias-n", value_delimiter = ',', default_value = "20")]
        bias_n: Vec<usize>,
        /// Timing repeats; the minimum run is reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { common, out } => run::gen(common, out),
        Command::Train { common, data, variant, out } => run::train(common, data, variant, out),
        Command::Eval { common, checkpoint, data, mode, bias_n, bias_file, out, trace } => {
            run::eval(common, checkpoint, data, mode, bias_n, bias_file, out, trace)
        }
        Command::Bench { common, checkpoint, data, mode, bias_n, repeats, out } => {
            run::bench(common, checkpoint, data, mode, bias_n, repeats, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}
