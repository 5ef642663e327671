use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Subcommand;
use policykit_harness::{
    emit_report, read_bundles, render, run_block, Block, ExperimentSpec, ReportFormat, ResultBundle,
};

use crate::read_text;

#[derive(Debug, Subcommand)]
pub enum HarnessCommand {
    /// Run one block and write its result bundle.
    Run {
        /// Experiment file with `block`, `seed`, `out` and a `[knobs]` table.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        block: Option<Block>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render every bundle in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Directory for `report.<ext>`; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the report instead of writing it.
        #[arg(long)]
        stdout: bool,
    },
}

fn exit_for(bundles: &[ResultBundle]) -> ExitCode {
    if bundles.iter().all(|b| b.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

pub fn run(command: HarnessCommand) -> anyhow::Result<ExitCode> {
    match command {
        HarnessCommand::Run {
            config,
            block,
            seed,
            out,
        } => {
            let mut spec = match (&config, block) {
                (Some(path), _) => ExperimentSpec::from_toml(&read_text(path)?)
                    .with_context(|| format!("parsing {}", path.display()))?,
                (None, Some(block)) => ExperimentSpec::new(block, policykit_harness::DEFAULT_SEED),
                (None, None) => return Err(anyhow!("pass --block or --config")),
            };
            if let Some(block) = block {
                if block != spec.block {
                    spec = ExperimentSpec {
                        out: spec.out.clone(),
                        ..ExperimentSpec::new(block, spec.seed)
                    };
                }
            }
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if out.is_some() {
                spec.out = out;
            }
            let dir = spec
                .out
                .clone()
                .ok_or_else(|| anyhow!("pass --out or set `out` in the config"))?;
            let bundle = run_block(&spec)?;
            let path = bundle.write(&dir)?;
            let (passed, failed, skipped) = bundle.counts();
            println!(
                "{} seed {}: {passed} passed, {failed} failed, {skipped} skipped -> {}",
                spec.block,
                spec.seed,
                path.display()
            );
            for case in bundle.failures() {
                println!("  FAIL {}: {}", case.id, case.status.detail());
            }
            Ok(exit_for(std::slice::from_ref(&bundle)))
        }
        HarnessCommand::Report {
            input,
            format,
            out,
            stdout,
        } => {
            let bundles = read_bundles(&input)?;
            if stdout {
                print!("{}", render(&bundles, format)?);
            } else {
                let path = emit_report(&bundles, format, out.as_deref().unwrap_or(&input))?;
                println!("{}", path.display());
            }
            Ok(exit_for(&bundles))
        }
    }
}
