//! `hgcn` command-line interface.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config::{resolve, Need, Overrides, Resolved};

type Run = fn(&Resolved) -> anyhow::Result<()>;

#[derive(Parser)]
#[command(name = "hgcn", version, about = "Heterogeneous graph convolution for multi-label text classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a per-epoch loss log.
    Train(Overrides),
    /// Evaluate a checkpoint on the test set.
    Eval(Overrides),
    /// Write per-sample token-label attribution matrices.
    Explain(Overrides),
    /// Write label-pair Pearson and cosine matrices.
    Correlate(Overrides),
    /// Generate a synthetic trigger-word corpus.
    Synth(Overrides),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HGCN_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let (overrides, need, run): (&Overrides, Need, Run) = match &cli.command {
        Command::Train(o) => (o, Need::Train, commands::train),
        Command::Eval(o) => (o, Need::Checkpoint, commands::eval),
        Command::Explain(o) => (o, Need::Checkpoint, commands::explain),
        Command::Correlate(o) => (o, Need::Checkpoint, commands::correlate),
        Command::Synth(o) => (o, Need::Nothing, commands::synth),
    };
    let resolved = match resolve(overrides, need) {
        Ok(r) => r,
        Err(errs) => {
            eprintln!("error: invalid configuration");
            for e in errs {
                eprintln!("  - {e}");
            }
            return ExitCode::from(1);
        }
    };
    match run(&resolved) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
