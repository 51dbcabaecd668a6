//! Beacon: a small open grid with a hidden goal cell.
//!
//! Each agent is paid `-d` per step, `d` being its Manhattan distance to
//! the goal, so tasks that differ only in the goal position produce
//! identical observations and can only be told apart by reward.
//! Agents may share cells.

use rand::Rng;

use super::{Cell, Outcome};
use crate::posg::{EnvError, TaskSpec};
use crate::rng::StreamRng;

/// stay, north, east, south, west
pub const N_ACTIONS: usize = 5;

#[derive(Clone, Debug)]
pub struct BeaconWorld {
    pub n_agents: usize,
    pub width: usize,
    pub height: usize,
    pub goal: Cell,
    pub agents: Vec<Cell>,
}

impl BeaconWorld {
    pub fn new(task: &TaskSpec, (width, height): (usize, usize)) -> Result<Self, EnvError> {
        let goal = Cell::new(task.param("goal_row", 0.0) as i32, task.param("goal_col", 0.0) as i32);
        if !goal.in_bounds(height, width) || width * height < 2 {
            return Err(EnvError::InvalidTask(format!("goal {goal:?} outside {width}x{height} grid")));
        }
        Ok(Self {
            n_agents: task.n_agents,
            width,
            height,
            goal,
            agents: vec![Cell::new(0, 0); task.n_agents],
        })
    }

    pub fn obs_size(&self) -> usize {
        2 * self.width * self.height
    }

    pub fn reset(&mut self, rng: &mut StreamRng) {
        for a in &mut self.agents {
            *a = Cell::new(rng.random_range(0..self.height as i32), rng.random_range(0..self.width as i32));
        }
    }

    pub fn step(&mut self, actions: &[usize]) -> Outcome {
        let mut out = Outcome::zeros(self.n_agents);
        for (i, (a, &act)) in self.agents.iter_mut().zip(actions).enumerate() {
            let (dr, dc) = match act {
                1 => (-1, 0),
                2 => (0, 1),
                3 => (1, 0),
                4 => (0, -1),
                _ => (0, 0),
            };
            let t = a.offset(dr, dc);
            if t.in_bounds(self.height, self.width) {
                *a = t;
            }
            out.rewards[i] = -(a.manhattan(self.goal) as f64);
        }
        out
    }

    /// One-hot of the agent's own cell followed by the occupancy of the
    /// other agents.
    pub fn encode_obs(&self, agent: usize) -> Vec<f64> {
        let cells = self.width * self.height;
        let mut obs = vec![0.0; 2 * cells];
        let idx = |c: Cell| c.row as usize * self.width + c.col as usize;
        obs[idx(self.agents[agent])] = 1.0;
        for (j, &c) in self.agents.iter().enumerate() {
            if j != agent {
                obs[cells + idx(c)] = 1.0;
            }
        }
        obs
    }

    pub fn ascii(&self) -> String {
        let mut s = String::new();
        for r in 0..self.height as i32 {
            for c in 0..self.width as i32 {
                let cell = Cell::new(r, c);
                s.push(if self.agents.contains(&cell) {
                    'a'
                } else if cell == self.goal {
                    '*'
                } else {
                    '.'
                });
            }
            s.push('\n');
        }
        s
    }
}
