use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod harness;
mod infer;
mod synth;

#[derive(Debug, Parser)]
#[command(
    name = "policykit",
    version,
    about = "Uplift policy scoring, split search and contract checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a frame with a policy forest and report parity and throughput.
    Infer(infer::InferArgs),
    /// Run contract blocks or render their result bundles.
    Harness {
        #[command(subcommand)]
        command: harness::HarnessCommand,
    },
    /// Write a seeded synthetic frame as CSV.
    Synth(synth::SynthArgs),
    /// Write a seeded random forest in the text format.
    Forest(synth::ForestArgs),
}

fn read_text(path: &PathBuf) -> anyhow::Result<String> {
    use anyhow::Context;
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Infer(args) => infer::run(args),
        Command::Harness { command } => harness::run(command),
        Command::Synth(args) => synth::run(args),
        Command::Forest(args) => synth::forest(args),
    }
}
