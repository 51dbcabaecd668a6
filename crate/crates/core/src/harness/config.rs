//! Experiment configuration, one TOML file per run.
//!
//! ```toml
//! paradigm = "mix"
//! seed = 3
//! out = "runs/bpush-mix-3"
//! n_train = 500000
//! n_test = 500000
//!
//! [a2c]
//! lr = 5e-4
//!
//! [[train.tasks]]
//! env = "bpush"
//! layout = "small"
//! n_agents = 2
//!
//! [[test.tasks]]
//! env = "bpush"
//! layout = "small"
//! n_agents = 2
//! params = { penalty = 0.01 }
//! ```
//!
//! Every table and key is optional except the task lists that a command
//! needs; missing values take the defaults of [`A2cConfig`] and
//! [`MateConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::LayoutRegistry;
use crate::maa2c::A2cConfig;
pub use crate::mate::Paradigm;
use crate::mate::MateConfig;
use crate::posg::{TaskSet, TaskSpec};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskList {
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paradigm: Paradigm,
    pub seed: u64,
    pub out: PathBuf,
    /// Env timesteps of the training phase.
    pub n_train: u64,
    /// Env timesteps of the fine-tuning phase.
    pub n_test: u64,
    /// Extra `*.txt` layout maps, keyed by file stem (`rware-foo.txt`).
    pub layout_dir: Option<PathBuf>,
    /// Episodes rolled out by `export-embeddings`.
    pub export_episodes: usize,
    /// Fraction of final episodes averaged for the reported return.
    pub final_window: f64,
    pub a2c: A2cConfig,
    pub mate: MateConfig,
    pub train: TaskList,
    pub test: TaskList,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::None,
            seed: 0,
            out: PathBuf::from("runs/default"),
            n_train: 1_000_000,
            n_test: 1_000_000,
            layout_dir: None,
            export_episodes: 20,
            final_window: 0.05,
            a2c: A2cConfig::default(),
            mate: MateConfig::default(),
            train: TaskList::default(),
            test: TaskList::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serialises")
    }

    /// Budget and hyperparameter checks; task lists are checked when built.
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("timestep budgets n_train and n_test must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.a2c.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.a2c.gamma)));
        }
        if self.a2c.n_envs == 0 || self.a2c.n_steps == 0 {
            return Err(Error::Config("n_envs and n_steps must be positive".into()));
        }
        if self.mate.beta < 0.0 {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.mate.beta)));
        }
        if !(self.final_window > 0.0 && self.final_window <= 1.0) {
            return Err(Error::Config(format!("final_window must lie in (0, 1], got {}", self.final_window)));
        }
        Ok(())
    }

    /// Built-in layouts plus those of `layout_dir`.
    pub fn layouts(&self) -> Result<LayoutRegistry> {
        let mut reg = LayoutRegistry::builtin();
        if let Some(dir) = &self.layout_dir {
            reg.load_dir(dir)?;
        }
        Ok(reg)
    }

    fn task_set(list: &TaskList, which: &str, layouts: &LayoutRegistry) -> Result<TaskSet> {
        if list.tasks.is_empty() {
            return Err(Error::Config(format!("no {which} tasks configured")));
        }
        Ok(TaskSet::new(list.tasks.clone(), layouts)?)
    }

    pub fn train_set(&self, layouts: &LayoutRegistry) -> Result<TaskSet> {
        Self::task_set(&self.train, "train", layouts)
    }

    /// The fine-tuning tasks; they must share agent count, observation
    /// size and action count with the training tasks when both are given.
    pub fn test_set(&self, layouts: &LayoutRegistry) -> Result<TaskSet> {
        let test = Self::task_set(&self.test, "test", layouts)?;
        if !self.train.tasks.is_empty() {
            let train = self.train_set(layouts)?;
            if !train.compatible_with(&test) {
                return Err(Error::Config(format!(
                    "train and test tasks differ in shape: {} agents / obs {} / {} actions vs {} / {} / {}",
                    train.n_agents(),
                    train.obs_size(),
                    train.n_actions(),
                    test.n_agents(),
                    test.obs_size(),
                    test.n_actions()
                )));
            }
        }
        Ok(test)
    }

    /// Env timesteps consumed by one training iteration.
    pub fn batch_steps(&self) -> u64 {
        (self.a2c.n_envs * self.a2c.n_steps) as u64
    }

    /// Iterations needed to consume `budget` timesteps (rounded up).
    pub fn iterations_for(&self, budget: u64) -> u64 {
        budget.div_ceil(self.batch_steps())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posg::EnvKind;

    const BPUSH: &str = r#"
paradigm = "mix"
seed = 3
n_train = 500
n_test = 1000

[mate]
beta = 0.2

[[train.tasks]]
env = "bpush"
layout = "small"
n_agents = 2

[[test.tasks]]
env = "bpush"
layout = "small"
n_agents = 2
params = { penalty = 0.01 }
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(BPUSH).unwrap();
        assert_eq!(cfg.paradigm, Paradigm::Mix);
        assert_eq!(cfg.a2c, A2cConfig::default());
        assert_eq!(cfg.mate.beta, 0.2);
        assert_eq!(cfg.mate.lr, 1e-4);
        assert_eq!(cfg.test.tasks[0].param("penalty", 0.0), 0.01);
        assert_eq!(cfg.train.tasks[0].env_kind, EnvKind::Bpush);
        assert_eq!(cfg.iterations_for(cfg.n_train), 10);
        let reg = cfg.layouts().unwrap();
        assert!(cfg.test_set(&reg).is_ok());
    }

    #[test]
    fn table_defaults() {
        let a = A2cConfig::default();
        assert_eq!((a.lr, a.adam_eps, a.entropy_coef, a.value_coef, a.tau, a.gamma), (5e-4, 1e-3, 0.01, 0.5, 0.01, 0.99));
        assert_eq!((a.n_steps, a.n_envs, a.policy_hidden, a.critic_hidden, a.max_grad_norm), (5, 10, 128, 128, None));
        let m = MateConfig::default();
        assert_eq!((m.lr, m.adam_eps, m.beta, m.max_grad_norm), (1e-4, 1e-3, 0.1, 0.5));
        assert_eq!((m.embedding_dim, m.encoder_hidden, m.decoder_hidden), (3, 64, 64));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::from_toml_str(BPUSH).unwrap();
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str("n_train = 0").is_err());
        assert!(RunConfig::from_toml_str("[a2c]\ngamma = 1.0").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("paradigm = \"both\"").is_err());
        let mismatched = r#"
[[train.tasks]]
env = "bpush"
layout = "small"
n_agents = 2
[[test.tasks]]
env = "lbf"
layout = "6x6"
n_agents = 2
"#;
        let cfg = RunConfig::from_toml_str(mismatched).unwrap();
        assert!(cfg.test_set(&cfg.layouts().unwrap()).is_err());
    }
}
