//! Cooperative navigation in the particle world.
//!
//! Agents are point masses driven by discrete unit forces. They share one
//! reward: minus the sum over landmarks of the distance to the closest
//! agent, minus a penalty per colliding pair.

use rand::Rng;

use super::Outcome;
use crate::posg::{EnvError, TaskSpec};
use crate::rng::StreamRng;

/// stay, right, left, up, down
pub const N_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpePhysics {
    pub dt: f64,
    pub damping: f64,
    pub mass: f64,
    pub force: f64,
    pub agent_radius: f64,
}

impl MpePhysics {
    fn from_task(task: &TaskSpec) -> Self {
        Self {
            dt: task.param("dt", 0.1),
            damping: task.param("damping", 0.25),
            mass: task.param("mass", 1.0),
            force: task.param("force", 5.0),
            agent_radius: task.param("agent_radius", 0.15),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MpeWorld {
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub landmarks: Vec<[f64; 2]>,
    pub collision_penalty: f64,
    pub physics: MpePhysics,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn action_dir(a: usize) -> [f64; 2] {
    match a {
        1 => [1.0, 0.0],
        2 => [-1.0, 0.0],
        3 => [0.0, 1.0],
        4 => [0.0, -1.0],
        _ => [0.0, 0.0],
    }
}

impl MpeWorld {
    pub fn new(task: &TaskSpec) -> Result<Self, EnvError> {
        let n = task.n_agents;
        if n == 0 {
            return Err(EnvError::InvalidTask("navigation needs at least one agent".into()));
        }
        let physics = MpePhysics::from_task(task);
        if !(physics.dt > 0.0 && physics.mass > 0.0 && (0.0..=1.0).contains(&physics.damping)) {
            return Err(EnvError::InvalidTask(format!("invalid particle physics {physics:?}")));
        }
        Ok(Self {
            positions: vec![[0.0; 2]; n],
            velocities: vec![[0.0; 2]; n],
            landmarks: vec![[0.0; 2]; n],
            collision_penalty: task.param("collision_penalty", 1.0).abs(),
            physics,
        })
    }

    pub fn obs_size(&self) -> usize {
        4 + 2 * (self.positions.len() - 1) + 2 * self.landmarks.len()
    }

    pub fn reset(&mut self, rng: &mut StreamRng) {
        let mut draw = || [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        for p in &mut self.positions {
            *p = draw();
        }
        for l in &mut self.landmarks {
            *l = draw();
        }
        self.velocities.iter_mut().for_each(|v| *v = [0.0; 2]);
    }

    pub fn collisions(&self) -> usize {
        let n = self.positions.len();
        let limit = 2.0 * self.physics.agent_radius;
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| dist(self.positions[i], self.positions[j]) < limit)
            .count()
    }

    pub fn coverage(&self) -> f64 {
        self.landmarks
            .iter()
            .map(|&l| self.positions.iter().map(|&p| dist(p, l)).fold(f64::INFINITY, f64::min))
            .sum()
    }

    pub fn step(&mut self, actions: &[usize]) -> Outcome {
        let ph = self.physics;
        for ((p, v), &a) in self.positions.iter_mut().zip(&mut self.velocities).zip(actions) {
            let u = action_dir(a);
            for k in 0..2 {
                v[k] = (1.0 - ph.damping) * v[k] + ph.force * u[k] * ph.dt / ph.mass;
                p[k] += v[k] * ph.dt;
            }
        }
        let n = self.positions.len();
        let collisions = self.collisions();
        let reward = -self.coverage() - self.collision_penalty * collisions as f64;
        let mut out = Outcome::zeros(n);
        out.rewards.iter_mut().for_each(|r| *r = reward);
        out.count("collisions", collisions as f64);
        out
    }

    /// Own velocity and position, then other agents and landmarks relative
    /// to the agent.
    pub fn encode_obs(&self, agent: usize) -> Vec<f64> {
        let p = self.positions[agent];
        let mut obs = Vec::with_capacity(self.obs_size());
        obs.extend_from_slice(&self.velocities[agent]);
        obs.extend_from_slice(&p);
        for (j, q) in self.positions.iter().enumerate() {
            if j != agent {
                obs.extend_from_slice(&[q[0] - p[0], q[1] - p[1]]);
            }
        }
        for l in &self.landmarks {
            obs.extend_from_slice(&[l[0] - p[0], l[1] - p[1]]);
        }
        obs
    }
}
