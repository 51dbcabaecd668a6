//! Multi-agent task embeddings for teamwork adaptation.
//!
//! The crate bundles everything needed to train and fine-tune teams of
//! recurrent actor-critic agents that condition on learned task embeddings:
//!
//! * [`autodiff`]: a small reverse-mode engine (dense, GRU, Adam).
//! * [`posg`]: task descriptions, task sets and a synchronous vectorised runner.
//! * [`envs`]: warehouse, particle navigation, boulder push and foraging worlds.
//! * [`mate`]: recurrent variational encoders, shared decoder, mixture weights.
//! * [`maa2c`]: per-agent policies and joint-observation critics.
//! * [`harness`]: configs, checkpoints, metrics and reporting.

pub mod autodiff;
pub mod envs;
pub mod harness;
pub mod maa2c;
pub mod mate;
pub mod posg;
pub mod rng;

mod error;

pub use error::{Error, Result};
pub use harness::config::{Paradigm, RunConfig};
pub use posg::{EnvKind, JointObservation, StepResult, TaskSet, TaskSpec};
