//! Partially observable stochastic games: task descriptions, task sets,
//! per-episode environment state and a synchronous vectorised runner.

mod runner;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{LayoutRegistry, World};
use crate::rng::StreamRng;

pub use runner::{SlotStep, VecEnv};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("unknown layout `{layout}` for {kind}")]
    UnknownLayout { kind: EnvKind, layout: String },
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("agent {agent} chose action {action}, but only {n_actions} actions exist")]
    ActionOutOfRange {
        agent: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("expected {expected} actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("environment slot {index}: {source}")]
    Slot {
        index: usize,
        #[source]
        source: Box<EnvError>,
    },
    #[error("layout file: {0}")]
    Layout(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Rware,
    Mpe,
    Bpush,
    Lbf,
    /// Toy gridworld whose only task-dependent feature is the hidden
    /// location of a dense reward.
    Beacon,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnvKind::Rware => "rware",
            EnvKind::Mpe => "mpe",
            EnvKind::Bpush => "bpush",
            EnvKind::Lbf => "lbf",
            EnvKind::Beacon => "beacon",
        };
        f.write_str(s)
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rware" => Ok(EnvKind::Rware),
            "mpe" => Ok(EnvKind::Mpe),
            "bpush" => Ok(EnvKind::Bpush),
            "lbf" => Ok(EnvKind::Lbf),
            "beacon" => Ok(EnvKind::Beacon),
            other => Err(EnvError::InvalidTask(format!("unknown environment kind `{other}`"))),
        }
    }
}

/// One POSG instance: environment family, layout and named parameters.
///
/// Recognised parameters (all optional, per family): `episode_limit`,
/// `penalty`, `collision_penalty`, `n_food`, `max_agent_level`, `coop`,
/// `sight`, `goal_row`, `goal_col`, `dt`, `damping`, `mass`, `force`,
/// `agent_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(rename = "env")]
    pub env_kind: EnvKind,
    #[serde(rename = "layout")]
    pub layout_id: String,
    pub n_agents: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Display name; defaults to `<env>-<layout>-<n>ag`.
    #[serde(default)]
    pub name: Option<String>,
}

impl TaskSpec {
    pub fn new(env_kind: EnvKind, layout_id: impl Into<String>, n_agents: usize) -> Self {
        Self {
            env_kind,
            layout_id: layout_id.into(),
            n_agents,
            params: BTreeMap::new(),
            name: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}-{}-{}ag", self.env_kind, self.layout_id, self.n_agents))
    }

    pub fn default_episode_limit(&self) -> usize {
        match self.env_kind {
            EnvKind::Rware => 500,
            EnvKind::Mpe => 25,
            EnvKind::Bpush | EnvKind::Lbf => 50,
            EnvKind::Beacon => 20,
        }
    }

    pub fn episode_limit(&self) -> usize {
        let limit = self.param("episode_limit", self.default_episode_limit() as f64);
        limit.max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_agents == 0 {
            return Err(EnvError::InvalidTask("n_agents must be at least 1".into()));
        }
        if self.episode_limit() == 0 {
            return Err(EnvError::InvalidTask("episode limit must be at least 1".into()));
        }
        if let Some((k, v)) = self.params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(EnvError::InvalidTask(format!("parameter {k} = {v} is not finite")));
        }
        Ok(())
    }
}

/// Per-agent observation vectors at one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointObservation {
    pub per_agent: Vec<Vec<f64>>,
}

impl JointObservation {
    pub fn new(per_agent: Vec<Vec<f64>>) -> Self {
        Self { per_agent }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.per_agent[i]
    }

    /// Concatenation of all agents' observations.
    pub fn flatten(&self) -> Vec<f64> {
        self.per_agent.concat()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub joint_obs: JointObservation,
    pub rewards: Vec<f64>,
    pub done: bool,
    /// Event counters (deliveries, pushes, pickups, collisions, ...).
    pub info: BTreeMap<String, f64>,
}

/// Non-empty list of tasks sharing agent count, observation size and action
/// count.
#[derive(Clone, Debug)]
pub struct TaskSet {
    tasks: Vec<TaskSpec>,
    n_agents: usize,
    obs_size: usize,
    n_actions: usize,
}

impl TaskSet {
    pub fn new(tasks: Vec<TaskSpec>, layouts: &LayoutRegistry) -> Result<Self, EnvError> {
        let first = tasks
            .first()
            .ok_or_else(|| EnvError::InvalidTask("task set must not be empty".into()))?;
        let mut shape = None;
        for task in &tasks {
            task.validate()?;
            let world = World::build(task, layouts)?;
            let s = (task.n_agents, world.obs_size(), world.n_actions());
            match shape {
                None => shape = Some(s),
                Some(expected) if expected != s => {
                    return Err(EnvError::InvalidTask(format!(
                        "task {} has (agents, obs, actions) = {s:?}, expected {expected:?} as in {}",
                        task.display_name(),
                        first.display_name()
                    )))
                }
                Some(_) => {}
            }
        }
        let (n_agents, obs_size, n_actions) = shape.expect("non-empty");
        Ok(Self {
            tasks,
            n_agents,
            obs_size,
            n_actions,
        })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn obs_size(&self) -> usize {
        self.obs_size
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Whether `other` could be used in place of this set by the same team.
    pub fn compatible_with(&self, other: &TaskSet) -> bool {
        (self.n_agents, self.obs_size, self.n_actions) == (other.n_agents, other.obs_size, other.n_actions)
    }
}

/// Uniformly samples a task index.
pub fn sample_task<R: Rng + ?Sized>(set: &TaskSet, rng: &mut R) -> usize {
    rng.random_range(0..set.len())
}

/// Mutable episode state of one environment instance.
#[derive(Clone, Debug)]
pub struct EnvState {
    task: TaskSpec,
    world: World,
    t: usize,
    limit: usize,
    rng: StreamRng,
}

impl EnvState {
    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn timestep(&self) -> usize {
        self.t
    }

    pub fn observe(&self) -> JointObservation {
        self.world.observe()
    }

    pub fn obs_size(&self) -> usize {
        self.world.obs_size()
    }

    pub fn n_actions(&self) -> usize {
        self.world.n_actions()
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    pub fn into_rng(self) -> StreamRng {
        self.rng
    }

    pub fn step(&mut self, joint_action: &[usize]) -> Result<StepResult, EnvError> {
        let n = self.task.n_agents;
        if joint_action.len() != n {
            return Err(EnvError::WrongActionCount {
                expected: n,
                got: joint_action.len(),
            });
        }
        let n_actions = self.world.n_actions();
        if let Some((agent, &action)) = joint_action.iter().enumerate().find(|(_, &a)| a >= n_actions) {
            return Err(EnvError::ActionOutOfRange {
                agent,
                action,
                n_actions,
            });
        }
        let outcome = self.world.step(joint_action, &mut self.rng);
        self.t += 1;
        Ok(StepResult {
            joint_obs: self.world.observe(),
            rewards: outcome.rewards,
            done: outcome.terminal || self.t >= self.limit,
            info: outcome.info,
        })
    }
}

/// Starts a fresh episode of `task`; the state keeps `rng` for in-episode
/// randomness.
pub fn env_reset(
    task: &TaskSpec,
    layouts: &LayoutRegistry,
    mut rng: StreamRng,
) -> Result<(EnvState, JointObservation), EnvError> {
    task.validate()?;
    let mut world = World::build(task, layouts)?;
    world.reset(&mut rng);
    let obs = world.observe();
    let state = EnvState {
        limit: task.episode_limit(),
        task: task.clone(),
        world,
        t: 0,
        rng,
    };
    Ok((state, obs))
}

pub fn env_step(state: &mut EnvState, joint_action: &[usize]) -> Result<StepResult, EnvError> {
    state.step(joint_action)
}
