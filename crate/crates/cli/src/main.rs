//! Command-line front end: speaker-confusion reports on WAV manifests and
//! loss comparisons on the synthetic toy extractor.

mod config;
mod report;
mod train_cmd;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{output_format, Effective, Overrides};
use train_cmd::Diverged;

#[derive(Debug, Parser)]
#[command(
    name = "tse-sc",
    version,
    about = "Speaker-confusion metrics and losses for target speech extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-utterance SI-SDR, SI-SDRi and confusion ratio, plus a corpus summary row.
    Eval {
        /// CSV with columns estimate,target,mixture (optionally id).
        #[arg(long)]
        manifest: PathBuf,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pooled chunk SI-SDRi class histogram over a manifest.
    Distribution {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Warm-up with the plain loss, then fine-tune with --loss.
    Train {
        /// Output directory for checkpoint.json and history.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// One shared warm-up, then a fine-tune per loss from the same state.
    Compare {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Effective::resolve(&cli.overrides)?;
    let format = |out: Option<&Path>| output_format(cli.overrides.format, out);
    match &cli.command {
        Command::Eval { manifest, out } => {
            let entries = report::read_manifest(manifest)?;
            let reports = report::evaluate_manifest(&entries, &cfg)?;
            emit(
                out.as_deref(),
                &report::render_eval(&reports, &cfg, format(out.as_deref()))?,
            )
        }
        Command::Distribution { manifest, out } => {
            let entries = report::read_manifest(manifest)?;
            let reports = report::evaluate_manifest(&entries, &cfg)?;
            emit(
                out.as_deref(),
                &report::render_distribution(&reports, &cfg, format(out.as_deref()))?,
            )
        }
        Command::Train { out } => train_cmd::run_train(&cfg, out),
        Command::Compare { out } => train_cmd::run_compare(&cfg, out, format(None)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<Diverged>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
