//! `hazardcard` — end-to-end orchestration of the scorecard pipeline.
//!
//! Stages communicate exclusively through files under the output directory,
//! so each one can be run (and re-run) on its own; `all` chains them in
//! dependency order. Every artifact is a pure function of the configuration,
//! the seed, and the inputs, regardless of `--threads`.

mod artifacts;
mod config;
mod stages;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use artifacts::{Layout, Manifest};
use config::PipelineConfig;
use stages::Stage;

/// Discrete-time hazard scorecard pipeline.
#[derive(Debug, Parser)]
#[command(name = "hazardcard", version, about)]
struct Cli {
    /// Configuration file (TOML). Defaults are used when omitted; an empty
    /// file is equivalent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for intra-stage parallelism. Defaults to all cores;
    /// results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory, overriding the configured one.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Generate a synthetic portfolio: loans, performance, macro series.
    Synth,
    /// Parse and label the inputs into censored loan histories.
    Ingest,
    /// Assign loans to train/test, stratified by terminal status.
    Split,
    /// Tally monthly observation counts, overall and per split.
    Counts,
    /// Draw the backward weighted panel sample for each split.
    Sample,
    /// Calibrate the balance interaction, assemble the design matrices, and
    /// emit feature diagnostics.
    Features,
    /// Fit the weighted logistic hazard model on the train design.
    Fit,
    /// Compare predicted and actual monthly bad rates per split.
    Backtest,
    /// Calibrate the score scale, band the panels, and score every loan.
    Score,
    /// Sweep the ROC curve, pick the Youden cutoff, and evaluate the
    /// configured score cutoffs.
    Cutoff,
    /// Aggregate the fitted model and evaluations into one report.
    Report,
    /// Run every stage in dependency order.
    All,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        match self {
            Command::Synth => Some(Stage::Synth),
            Command::Ingest => Some(Stage::Ingest),
            Command::Split => Some(Stage::Split),
            Command::Counts => Some(Stage::Counts),
            Command::Sample => Some(Stage::Sample),
            Command::Features => Some(Stage::Features),
            Command::Fit => Some(Stage::Fit),
            Command::Backtest => Some(Stage::Backtest),
            Command::Score => Some(Stage::Score),
            Command::Cutoff => Some(Stage::Cutoff),
            Command::Report => Some(Stage::Report),
            Command::All => None,
        }
    }
}

/// Runs one stage, prints its tallies, and records it in the manifest.
fn execute(stage: Stage, config: &PipelineConfig) -> Result<()> {
    let layout = Layout::new(&config.paths.out_dir);
    let started = Instant::now();
    let tallies = stages::run(stage, config, &layout)?;
    let elapsed_ms = started.elapsed().as_millis() as u64;

    let summary: Vec<String> = tallies.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("[{}] {} ({elapsed_ms} ms)", stage.name(), summary.join(" "));

    let hash = config.content_hash();
    let mut manifest = Manifest::load_or_new(&layout.manifest(), &hash, config.seed)?;
    manifest.record(stage.name(), elapsed_ms, tallies);
    manifest.save(&layout.manifest())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    config.apply_overrides(cli.seed, cli.out);
    config.validate().context("invalid configuration")?;

    match cli.command.stage() {
        Some(stage) => execute(stage, &config),
        None => {
            let mut order = Vec::new();
            // `all` generates its own inputs unless every input path is
            // explicitly configured.
            if config.synth_feeds_inputs() {
                order.push(Stage::Synth);
            }
            order.extend([
                Stage::Ingest,
                Stage::Split,
                Stage::Counts,
                Stage::Sample,
                Stage::Features,
                Stage::Fit,
                Stage::Backtest,
                Stage::Score,
                Stage::Cutoff,
                Stage::Report,
            ]);
            for stage in order {
                execute(stage, &config)?;
            }
            Ok(())
        }
    }
}
