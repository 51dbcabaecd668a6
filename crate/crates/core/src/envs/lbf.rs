//! Level-based foraging.
//!
//! Agents collect food by standing next to it and choosing pick-up together;
//! a food item is collected when the levels of the agents picking it up sum
//! to at least its level. Rewards are normalised so that collecting every
//! item gives the team a return of exactly 1.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{resolve_moves, Cell, Outcome};
use crate::posg::{EnvError, TaskSpec};
use crate::rng::StreamRng;

/// stay, north, south, west, east, pick-up
pub const N_ACTIONS: usize = 6;
pub const PICK: usize = 5;
pub const CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntityKind {
    Agent,
    Food,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LbfEntity {
    pub position: Cell,
    pub level: u32,
    pub kind: EntityKind,
    /// Always true for agents.
    pub alive: bool,
}

#[derive(Clone, Debug)]
pub struct LbfWorld {
    pub n_agents: usize,
    pub width: usize,
    pub height: usize,
    pub n_food: usize,
    pub max_agent_level: u32,
    /// Every food needs the whole team.
    pub coop: bool,
    /// Reward for a pick-up that collects nothing (0 in the plain task).
    pub penalty: f64,
    pub sight: usize,
    pub agents: Vec<LbfEntity>,
    pub food: Vec<LbfEntity>,
    total_food_level: f64,
}

fn move_delta(action: usize) -> (i32, i32) {
    match action {
        1 => (-1, 0),
        2 => (1, 0),
        3 => (0, -1),
        4 => (0, 1),
        _ => (0, 0),
    }
}

impl LbfWorld {
    pub fn new(task: &TaskSpec, (width, height): (usize, usize)) -> Result<Self, EnvError> {
        let n = task.n_agents;
        let n_food = task.param("n_food", n as f64) as usize;
        let max_agent_level = task.param("max_agent_level", 2.0) as u32;
        if n_food == 0 || max_agent_level == 0 {
            return Err(EnvError::InvalidTask("foraging needs food and positive agent levels".into()));
        }
        let world = Self {
            n_agents: n,
            width,
            height,
            n_food,
            max_agent_level,
            coop: task.param("coop", 0.0) != 0.0,
            penalty: -task.param("penalty", 0.0).abs(),
            sight: task.param("sight", 2.0) as usize,
            agents: Vec::new(),
            food: Vec::new(),
            total_food_level: 0.0,
        };
        let capacity = world.lattice().len();
        if n_food > capacity {
            return Err(EnvError::InvalidTask(format!("{width}x{height} grid holds at most {capacity} separated food items")));
        }
        if width * height < n + n_food {
            return Err(EnvError::InvalidTask("grid too small for agents and food".into()));
        }
        Ok(world)
    }

    pub fn obs_size(&self) -> usize {
        let side = 2 * self.sight + 1;
        CHANNELS * side * side
    }

    fn contains(&self, c: Cell) -> bool {
        c.in_bounds(self.height, self.width)
    }

    fn interior(&self) -> Vec<Cell> {
        let (h, w) = (self.height as i32, self.width as i32);
        if h < 3 || w < 3 {
            return (0..h).flat_map(|r| (0..w).map(move |c| Cell::new(r, c))).collect();
        }
        (1..h - 1).flat_map(|r| (1..w - 1).map(move |c| Cell::new(r, c))).collect()
    }

    /// Fallback food sites two cells apart.
    fn lattice(&self) -> Vec<Cell> {
        self.interior()
            .into_iter()
            .filter(|c| {
                let base = if self.height < 3 || self.width < 3 { 0 } else { 1 };
                (c.row - base) % 2 == 0 && (c.col - base) % 2 == 0
            })
            .collect()
    }

    fn separated(food: &[LbfEntity], c: Cell) -> bool {
        food.iter().all(|f| (f.position.row - c.row).abs().max((f.position.col - c.col).abs()) > 1)
    }

    pub fn reset(&mut self, rng: &mut StreamRng) {
        self.agents = (0..self.n_agents)
            .map(|_| LbfEntity {
                position: Cell::new(0, 0),
                level: rng.random_range(1..=self.max_agent_level),
                kind: EntityKind::Agent,
                alive: true,
            })
            .collect();
        let team: u32 = self.agents.iter().map(|a| a.level).sum();

        let mut sites = self.interior();
        sites.shuffle(rng);
        let mut food: Vec<LbfEntity> = Vec::with_capacity(self.n_food);
        for c in sites {
            if food.len() == self.n_food {
                break;
            }
            if Self::separated(&food, c) {
                food.push(LbfEntity {
                    position: c,
                    level: 0,
                    kind: EntityKind::Food,
                    alive: true,
                });
            }
        }
        if food.len() < self.n_food {
            let mut sites = self.lattice();
            sites.shuffle(rng);
            food = sites
                .into_iter()
                .take(self.n_food)
                .map(|c| LbfEntity {
                    position: c,
                    level: 0,
                    kind: EntityKind::Food,
                    alive: true,
                })
                .collect();
        }
        for f in &mut food {
            f.level = if self.coop { team } else { rng.random_range(1..=team) };
        }
        self.total_food_level = food.iter().map(|f| f.level as f64).sum();

        let mut free: Vec<Cell> = (0..self.height as i32)
            .flat_map(|r| (0..self.width as i32).map(move |c| Cell::new(r, c)))
            .filter(|c| food.iter().all(|f| f.position != *c))
            .collect();
        free.shuffle(rng);
        for (a, c) in self.agents.iter_mut().zip(free) {
            a.position = c;
        }
        self.food = food;
    }

    /// Replaces agents and food (tests and scripted scenarios).
    pub fn set_state(&mut self, agents: Vec<(Cell, u32)>, food: Vec<(Cell, u32)>) {
        assert_eq!(agents.len(), self.n_agents);
        let mk = |kind| move |(position, level): (Cell, u32)| LbfEntity { position, level, kind, alive: true };
        self.agents = agents.into_iter().map(mk(EntityKind::Agent)).collect();
        self.food = food.into_iter().map(mk(EntityKind::Food)).collect();
        self.total_food_level = self.food.iter().map(|f| f.level as f64).sum();
    }

    pub fn food_left(&self) -> usize {
        self.food.iter().filter(|f| f.alive).count()
    }

    fn food_at(&self, c: Cell) -> bool {
        self.food.iter().any(|f| f.alive && f.position == c)
    }

    pub fn step(&mut self, actions: &[usize]) -> Outcome {
        let n = self.n_agents;
        let mut out = Outcome::zeros(n);
        let current: Vec<Cell> = self.agents.iter().map(|a| a.position).collect();
        let desired: Vec<Option<Cell>> = current
            .iter()
            .zip(actions)
            .map(|(&c, &a)| {
                let (dr, dc) = move_delta(a);
                let t = c.offset(dr, dc);
                ((dr, dc) != (0, 0) && self.contains(t) && !self.food_at(t)).then_some(t)
            })
            .collect();
        for (a, c) in self.agents.iter_mut().zip(resolve_moves(&current, &desired)) {
            a.position = c;
        }

        let mut collected = vec![false; n];
        for f in 0..self.food.len() {
            if !self.food[f].alive {
                continue;
            }
            let pos = self.food[f].position;
            let pickers: Vec<usize> = (0..n)
                .filter(|&i| actions[i] == PICK && self.agents[i].position.is_adjacent(pos))
                .collect();
            let levels: u32 = pickers.iter().map(|&i| self.agents[i].level).sum();
            if pickers.is_empty() || levels < self.food[f].level {
                continue;
            }
            self.food[f].alive = false;
            out.count("food_collected", 1.0);
            let value = self.food[f].level as f64 / self.total_food_level;
            for &i in &pickers {
                out.rewards[i] += value * self.agents[i].level as f64 / levels as f64;
                collected[i] = true;
            }
        }
        for i in 0..n {
            if actions[i] == PICK && !collected[i] && self.penalty != 0.0 {
                out.rewards[i] += self.penalty;
                out.count("failed_picks", 1.0);
            }
        }
        out.terminal = self.food_left() == 0;
        out
    }

    /// Three `(2s+1)^2` planes centred on the agent: agent levels (the agent
    /// itself included), food levels, and cells outside the grid.
    pub fn encode_obs(&self, agent: usize) -> Vec<f64> {
        let side = 2 * self.sight + 1;
        let plane = side * side;
        let mut obs = vec![0.0; CHANNELS * plane];
        let me = self.agents[agent].position;
        let s = self.sight as i32;
        for vr in 0..side {
            for vc in 0..side {
                let cell = me.offset(vr as i32 - s, vc as i32 - s);
                let k = vr * side + vc;
                if !self.contains(cell) {
                    obs[2 * plane + k] = 1.0;
                    continue;
                }
                if let Some(a) = self.agents.iter().find(|a| a.position == cell) {
                    obs[k] = a.level as f64;
                }
                if let Some(f) = self.food.iter().find(|f| f.alive && f.position == cell) {
                    obs[plane + k] = f.level as f64;
                }
            }
        }
        obs
    }

    pub fn ascii(&self) -> String {
        let mut s = String::new();
        for r in 0..self.height as i32 {
            for c in 0..self.width as i32 {
                let cell = Cell::new(r, c);
                let ch = if let Some(a) = self.agents.iter().find(|a| a.position == cell) {
                    char::from_digit(a.level % 10, 10).unwrap_or('A')
                } else if let Some(f) = self.food.iter().find(|f| f.alive && f.position == cell) {
                    char::from_u32('a' as u32 + (f.level.saturating_sub(1) % 26)).unwrap_or('f')
                } else {
                    '.'
                };
                s.push(ch);
            }
            s.push('\n');
        }
        s
    }
}
