//! Experiment orchestration: configs, train and fine-tune pipelines,
//! checkpoints, metric streams and reporting.

pub mod checkpoint;
pub mod config;
pub mod curves;
pub mod metrics;
pub mod run;
pub mod stats;

pub use checkpoint::Checkpoint;
pub use config::{RunConfig, TaskList};
pub use curves::{emit_curves, emit_weight_traces, CurveOptions, CurvePoint};
pub use metrics::{read_embeddings, read_metrics, MetricsRow};
pub use run::{export_embeddings, run_finetune, run_train, PhaseSummary, RunOptions};
pub use stats::{final_window_iqm, iqm, pca_project, stratified_bootstrap_ci, Projection};
