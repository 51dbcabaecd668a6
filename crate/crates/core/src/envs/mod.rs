//! Benchmark worlds.
//!
//! Every world exposes the same four operations to [`crate::posg`]:
//! `reset`, `step`, `observe` and its fixed observation / action sizes.

pub mod beacon;
pub mod bpush;
mod grid;
pub mod layout;
pub mod lbf;
pub mod mpe;
pub mod rware;

use std::collections::BTreeMap;

use crate::posg::{EnvError, EnvKind, JointObservation, TaskSpec};
use crate::rng::StreamRng;

pub use grid::{resolve_moves, Cell, Direction};
pub use layout::{CellTag, GridLayout, LayoutRegistry};

/// Rewards and events of one transition, before time-limit handling.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub rewards: Vec<f64>,
    pub terminal: bool,
    pub info: BTreeMap<String, f64>,
}

impl Outcome {
    pub(crate) fn zeros(n: usize) -> Self {
        Self {
            rewards: vec![0.0; n],
            ..Self::default()
        }
    }

    pub(crate) fn count(&mut self, key: &str, by: f64) {
        *self.info.entry(key.to_string()).or_insert(0.0) += by;
    }
}

#[derive(Clone, Debug)]
pub enum World {
    Rware(rware::RwareWorld),
    Mpe(mpe::MpeWorld),
    Bpush(bpush::BpushWorld),
    Lbf(lbf::LbfWorld),
    Beacon(beacon::BeaconWorld),
}

impl World {
    /// Instantiates the world for `task` (unplaced; call [`World::reset`]).
    pub fn build(task: &TaskSpec, layouts: &LayoutRegistry) -> Result<Self, EnvError> {
        Ok(match task.env_kind {
            EnvKind::Rware => World::Rware(rware::RwareWorld::new(task, layouts.grid(EnvKind::Rware, &task.layout_id)?.clone())?),
            EnvKind::Bpush => World::Bpush(bpush::BpushWorld::new(task, layouts.grid(EnvKind::Bpush, &task.layout_id)?)?),
            EnvKind::Lbf => World::Lbf(lbf::LbfWorld::new(task, layouts.dims(EnvKind::Lbf, &task.layout_id)?)?),
            EnvKind::Beacon => World::Beacon(beacon::BeaconWorld::new(task, layouts.dims(EnvKind::Beacon, &task.layout_id)?)?),
            EnvKind::Mpe => {
                if task.layout_id != "spread" {
                    return Err(EnvError::UnknownLayout {
                        kind: EnvKind::Mpe,
                        layout: task.layout_id.clone(),
                    });
                }
                World::Mpe(mpe::MpeWorld::new(task)?)
            }
        })
    }

    pub fn reset(&mut self, rng: &mut StreamRng) {
        match self {
            World::Rware(w) => w.reset(rng),
            World::Mpe(w) => w.reset(rng),
            World::Bpush(w) => w.reset(rng),
            World::Lbf(w) => w.reset(rng),
            World::Beacon(w) => w.reset(rng),
        }
    }

    pub fn step(&mut self, actions: &[usize], rng: &mut StreamRng) -> Outcome {
        match self {
            World::Rware(w) => w.step(actions, rng),
            World::Mpe(w) => w.step(actions),
            World::Bpush(w) => w.step(actions),
            World::Lbf(w) => w.step(actions),
            World::Beacon(w) => w.step(actions),
        }
    }

    pub fn observe(&self) -> JointObservation {
        let n = self.n_agents();
        JointObservation::new((0..n).map(|i| self.encode_obs(i)).collect())
    }

    pub fn encode_obs(&self, agent: usize) -> Vec<f64> {
        match self {
            World::Rware(w) => w.encode_obs(agent),
            World::Mpe(w) => w.encode_obs(agent),
            World::Bpush(w) => w.encode_obs(agent),
            World::Lbf(w) => w.encode_obs(agent),
            World::Beacon(w) => w.encode_obs(agent),
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            World::Rware(w) => w.agents.len(),
            World::Mpe(w) => w.positions.len(),
            World::Bpush(w) => w.n_agents,
            World::Lbf(w) => w.n_agents,
            World::Beacon(w) => w.n_agents,
        }
    }

    pub fn obs_size(&self) -> usize {
        match self {
            World::Rware(_) => rware::OBS_SIZE,
            World::Mpe(w) => w.obs_size(),
            World::Bpush(_) => bpush::OBS_SIZE,
            World::Lbf(w) => w.obs_size(),
            World::Beacon(w) => w.obs_size(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            World::Rware(_) => rware::N_ACTIONS,
            World::Mpe(_) => mpe::N_ACTIONS,
            World::Bpush(_) => bpush::N_ACTIONS,
            World::Lbf(_) => lbf::N_ACTIONS,
            World::Beacon(_) => beacon::N_ACTIONS,
        }
    }

    /// Plain-text rendering for debugging.
    pub fn ascii(&self) -> String {
        match self {
            World::Rware(w) => w.ascii(),
            World::Bpush(w) => w.ascii(),
            World::Lbf(w) => w.ascii(),
            World::Beacon(w) => w.ascii(),
            World::Mpe(w) => format!("{w:?}"),
        }
    }
}
