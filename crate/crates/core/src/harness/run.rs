//! Train, fine-tune and export pipelines.

use std::path::{Path, PathBuf};

use log::{debug, info};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::{write_embeddings, CsvStream, MetricsRow};
use super::stats::final_window_iqm;
use crate::maa2c::Learner;
use crate::posg::TaskSet;
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Fine-tuning environments draw from streams of `seed + FINETUNE_SEED_OFFSET`
/// so they do not replay the training episodes.
const FINETUNE_SEED_OFFSET: u64 = 1 << 32;

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Write a `# created` line at the top of every CSV.
    pub timestamp: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { timestamp: true }
    }
}

#[derive(Clone, Debug)]
pub struct PhaseSummary {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub iterations: u64,
    pub timesteps: u64,
    /// Team return per finished episode, in order.
    pub returns: Vec<f64>,
    /// IQM of the last `final_window` fraction of episodes.
    pub final_return: Option<f64>,
}

fn run_phase(learner: &mut Learner, config: &RunConfig, tasks: &TaskSet, budget: u64, phase: &str, opts: RunOptions) -> Result<PhaseSummary> {
    let out = &config.out;
    let metrics = out.join(METRICS_FILE);
    let names: Vec<String> = tasks.tasks().iter().map(|t| t.display_name()).collect();
    let mut stream = CsvStream::create(&metrics, opts.timestamp)?;
    let iterations = config.iterations_for(budget);
    let start = learner.timesteps;
    let mut returns = Vec::new();
    let report_every = (iterations / 20).max(1);
    for it in 0..iterations {
        let s = learner.train_iteration()?;
        for e in &s.episodes {
            returns.push(e.team_return);
            stream.write(&MetricsRow {
                step: e.timestep - start,
                phase: phase.to_string(),
                task: names[e.task_index].clone(),
                episode_return: e.team_return,
                episode_len: e.len,
                policy_loss: s.policy_loss,
                value_loss: s.value_loss,
                entropy: s.entropy,
                mate_loss: s.mate_loss,
            })?;
        }
        debug!("{phase} iteration {it}: policy {:.4} value {:.4} entropy {:.4} mate {:?}", s.policy_loss, s.value_loss, s.entropy, s.mate_loss);
        if (it + 1) % report_every == 0 {
            let recent = &returns[returns.len().saturating_sub(100)..];
            let mean = recent.iter().sum::<f64>() / recent.len().max(1) as f64;
            info!("{phase}: {} / {budget} steps, mean team return of last {} episodes {mean:.3}", learner.timesteps - start, recent.len());
        }
    }
    stream.finish()?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    Checkpoint::capture(learner, config).save(&checkpoint)?;
    let final_return = if returns.is_empty() { None } else { Some(final_window_iqm(&returns, config.final_window)?) };
    let summary = out.join(SUMMARY_FILE);
    let text = format!(
        "phase {phase}\niterations {iterations}\ntimesteps {}\nepisodes {}\nfinal_return {}\n",
        learner.timesteps - start,
        returns.len(),
        final_return.map_or("nan".to_string(), |r| r.to_string())
    );
    std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;
    Ok(PhaseSummary {
        metrics,
        checkpoint,
        iterations,
        timesteps: learner.timesteps - start,
        returns,
        final_return,
    })
}

/// Trains fresh networks on the training tasks for `n_train` timesteps;
/// writes `metrics.csv`, `checkpoint.bin`, `manifest.txt` and
/// `summary.txt` into `config.out`.
pub fn run_train(config: &RunConfig, opts: RunOptions) -> Result<PhaseSummary> {
    config.validate()?;
    let layouts = config.layouts()?;
    let tasks = config.train_set(&layouts)?;
    let mut learner = Learner::new(
        config.paradigm,
        tasks.n_agents(),
        tasks.obs_size(),
        tasks.n_actions(),
        config.a2c.clone(),
        config.mate.clone(),
        config.seed,
    )?;
    learner.attach(tasks.clone(), layouts, config.seed)?;
    info!("training {} for {} timesteps on {} task(s)", config.paradigm, config.n_train, tasks.len());
    run_phase(&mut learner, config, &tasks, config.n_train, "train", opts)
}

fn check_architecture(config: &RunConfig, ck: &Checkpoint) -> Result<()> {
    if ck.paradigm != config.paradigm {
        return Err(Error::Config(format!("checkpoint paradigm {} does not match configured {}", ck.paradigm, config.paradigm)));
    }
    let (a, b) = (&ck.config.a2c, &config.a2c);
    let (m, n) = (&ck.config.mate, &config.mate);
    if a.policy_hidden != b.policy_hidden
        || a.critic_hidden != b.critic_hidden
        || a.critic_embeddings != b.critic_embeddings
        || m.embedding_dim != n.embedding_dim
        || m.encoder_hidden != n.encoder_hidden
        || m.decoder_hidden != n.decoder_hidden
    {
        return Err(Error::Config("checkpoint network sizes differ from the configured ones".into()));
    }
    Ok(())
}

/// Loads `checkpoint`, freezes every MATE parameter and trains policies and
/// critics on the test tasks for `n_test` timesteps.
pub fn run_finetune(config: &RunConfig, checkpoint: &Path, opts: RunOptions) -> Result<PhaseSummary> {
    config.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    check_architecture(config, &ck)?;
    let layouts = config.layouts()?;
    let tasks = config.test_set(&layouts)?;
    let mut learner = ck.restore()?;
    learner.a2c = config.a2c.clone();
    for opt in &mut learner.optimizers {
        opt.config.lr = config.a2c.lr;
        opt.config.eps = config.a2c.adam_eps;
    }
    learner.freeze_mate = true;
    learner.attach(tasks.clone(), layouts, config.seed.wrapping_add(FINETUNE_SEED_OFFSET))?;
    info!("fine-tuning {} for {} timesteps on {} task(s)", config.paradigm, config.n_test, tasks.len());
    let summary = run_phase(&mut learner, config, &tasks, config.n_test, "finetune", opts)?;
    if let Some(r) = summary.final_return {
        info!("final fine-tuning return (IQM of last {:.0}% of episodes): {r:.4}", config.final_window * 100.0);
    }
    Ok(summary)
}

/// Rolls the checkpointed policies out on the test tasks (or the training
/// tasks when none are configured) and writes `embeddings.csv`.
pub fn export_embeddings(config: &RunConfig, checkpoint: &Path, opts: RunOptions) -> Result<PathBuf> {
    let ck = Checkpoint::load(checkpoint)?;
    if !ck.paradigm.uses_mate() {
        return Err(Error::Config("checkpoint was trained without task embeddings".into()));
    }
    let layouts = config.layouts()?;
    let tasks = if config.test.tasks.is_empty() { config.train_set(&layouts)? } else { config.test_set(&layouts)? };
    let names: Vec<String> = tasks.tasks().iter().map(|t| t.display_name()).collect();
    let learner = ck.restore()?;
    let rows = learner.trace_embeddings(tasks, layouts, config.export_episodes, config.seed)?;
    let path = config.out.join(EMBEDDINGS_FILE);
    write_embeddings(&path, &names, &rows, opts.timestamp)?;
    info!("wrote {} embedding rows to {}", rows.len(), path.display());
    Ok(path)
}
