//! `mate`: train, fine-tune, export task embeddings and plot learning
//! curves.
//!
//! Verbosity follows `MATE_LOG_LEVEL` (`error` .. `trace`, default `info`).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mate_core::harness::{self, CurveOptions, RunOptions};
use mate_core::RunConfig;

#[derive(Parser)]
#[command(name = "mate", version, about = "Multi-agent task embeddings for teamwork adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train fresh agents on the configured training tasks.
    Train(RunArgs),
    /// Fine-tune a checkpoint on the test tasks with task encoders frozen.
    Finetune(RunArgs),
    /// Roll a checkpoint out and dump per-timestep task embeddings.
    ExportEmbeddings(RunArgs),
    /// Aggregate metrics files (one per seed) into curves.csv and curves.svg.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Required by finetune and export-embeddings.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Omit the `# created` line from CSV outputs.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// metrics.csv files, one per seed.
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// An embeddings.csv with mixture weights, traced into weights.csv.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Seed of the bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long)]
    no_timestamp: bool,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, RunOptions)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok((cfg, RunOptions { timestamp: !self.no_timestamp }))
    }

    fn checkpoint(&self, command: &str) -> Result<&PathBuf> {
        match &self.checkpoint {
            Some(p) => Ok(p),
            None => bail!("{command} needs --checkpoint PATH"),
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MATE_LOG_LEVEL", "info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train(args) => {
            let (cfg, opts) = args.load()?;
            let s = harness::run_train(&cfg, opts).context("training failed")?;
            info!("wrote {} and {}", s.metrics.display(), s.checkpoint.display());
        }
        Command::Finetune(args) => {
            let (cfg, opts) = args.load()?;
            let ck = args.checkpoint("finetune")?;
            let s = harness::run_finetune(&cfg, ck, opts).context("fine-tuning failed")?;
            match s.final_return {
                Some(r) => println!("final_return {r}"),
                None => println!("final_return nan"),
            }
        }
        Command::ExportEmbeddings(args) => {
            let (cfg, opts) = args.load()?;
            let ck = args.checkpoint("export-embeddings")?;
            harness::export_embeddings(&cfg, ck, opts).context("embedding export failed")?;
        }
        Command::Report(args) => {
            let opts = CurveOptions {
                points: args.points,
                seed: args.seed,
                timestamp: !args.no_timestamp,
                ..CurveOptions::default()
            };
            let written = harness::emit_curves(&args.metrics, &args.out, &opts)?;
            for p in &written {
                info!("wrote {}", p.display());
            }
            if let Some(emb) = &args.embeddings {
                match harness::emit_weight_traces(emb, &args.out.join("weights.csv"), opts.timestamp)? {
                    Some(p) => info!("wrote {}", p.display()),
                    None => info!("{} holds no mixture weights", emb.display()),
                }
            }
        }
    }
    Ok(())
}
