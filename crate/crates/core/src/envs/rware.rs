//! Multi-robot warehouse.
//!
//! Robots fetch requested shelves and bring them to delivery cells. Each
//! robot sees a 5x5x5 egocentric binary grid that turns with it, plus its
//! heading, whether it carries a shelf and whether it stands on one.

use rand::seq::index::sample;
use rand::Rng;

use super::{resolve_moves, Cell, CellTag, Direction, GridLayout, Outcome};
use crate::posg::{EnvError, TaskSpec};
use crate::rng::StreamRng;

pub const VIEW: usize = 5;
pub const CHANNELS: usize = 5;
pub const OBS_SIZE: usize = VIEW * VIEW * CHANNELS + 4 + 2;
pub const N_ACTIONS: usize = 5;

/// Observation channel order.
pub mod channel {
    pub const SHELVES: usize = 0;
    pub const REQUESTED: usize = 1;
    pub const AGENTS: usize = 2;
    pub const DELIVERY: usize = 3;
    pub const BOUNDARY: usize = 4;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwareAction {
    Stay,
    Forward,
    RotateLeft,
    RotateRight,
    ToggleLoad,
}

impl RwareAction {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Self::Stay,
            1 => Self::Forward,
            2 => Self::RotateLeft,
            3 => Self::RotateRight,
            _ => Self::ToggleLoad,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RwareAgentState {
    pub position: Cell,
    pub rotation: Direction,
    /// Index into [`RwareWorld::shelves`].
    pub carried: Option<usize>,
}

impl RwareAgentState {
    pub fn carrying(&self) -> bool {
        self.carried.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct RwareWorld {
    pub layout: GridLayout,
    pub agents: Vec<RwareAgentState>,
    /// Current cell of every shelf.
    pub shelves: Vec<Cell>,
    /// Requested shelf ids; always `agents.len()` entries during an episode.
    pub requests: Vec<usize>,
    shelf_at: Vec<Option<usize>>,
}

impl RwareWorld {
    pub fn new(task: &TaskSpec, layout: GridLayout) -> Result<Self, EnvError> {
        let n = task.n_agents;
        let homes = layout.cells_with(CellTag::Shelf);
        if layout.cells_with(CellTag::Delivery).is_empty() {
            return Err(EnvError::InvalidTask(format!("warehouse {} has no delivery cell", task.layout_id)));
        }
        if homes.len() <= n {
            return Err(EnvError::InvalidTask(format!(
                "warehouse {} has {} shelves, need more than {n}",
                task.layout_id,
                homes.len()
            )));
        }
        if layout.width * layout.height < n {
            return Err(EnvError::InvalidTask("more robots than cells".into()));
        }
        let mut world = Self {
            agents: (0..n)
                .map(|_| RwareAgentState {
                    position: Cell::new(0, 0),
                    rotation: Direction::North,
                    carried: None,
                })
                .collect(),
            shelf_at: vec![None; layout.width * layout.height],
            shelves: homes,
            requests: Vec::new(),
            layout,
        };
        world.rebuild_index();
        Ok(world)
    }

    fn idx(&self, c: Cell) -> usize {
        c.row as usize * self.layout.width + c.col as usize
    }

    fn rebuild_index(&mut self) {
        self.shelf_at.fill(None);
        for (i, &c) in self.shelves.iter().enumerate() {
            let k = self.idx(c);
            self.shelf_at[k] = Some(i);
        }
    }

    pub fn shelf_at(&self, c: Cell) -> Option<usize> {
        self.layout.contains(c).then(|| self.shelf_at[self.idx(c)]).flatten()
    }

    pub fn reset(&mut self, rng: &mut StreamRng) {
        self.shelves = self.layout.cells_with(CellTag::Shelf);
        self.rebuild_index();
        let n = self.agents.len();
        let cells: Vec<Cell> = self.layout.all_cells().collect();
        let picks = sample(rng, cells.len(), n);
        for (agent, k) in self.agents.iter_mut().zip(picks.iter()) {
            agent.position = cells[k];
            agent.rotation = Direction::from_index(rng.random_range(0..4));
            agent.carried = None;
        }
        self.requests = sample(rng, self.shelves.len(), n).into_vec();
    }

    /// Places robots explicitly (tests, scripted scenarios).
    pub fn set_agents(&mut self, agents: Vec<RwareAgentState>) {
        assert_eq!(agents.len(), self.agents.len());
        self.agents = agents;
    }

    pub fn set_requests(&mut self, requests: Vec<usize>) {
        self.requests = requests;
    }

    pub fn step(&mut self, actions: &[usize], rng: &mut StreamRng) -> Outcome {
        let n = self.agents.len();
        let mut out = Outcome::zeros(n);
        let acts: Vec<RwareAction> = actions.iter().map(|&a| RwareAction::from_index(a)).collect();

        for (agent, act) in self.agents.iter_mut().zip(&acts) {
            match act {
                RwareAction::RotateLeft => agent.rotation = agent.rotation.turn_left(),
                RwareAction::RotateRight => agent.rotation = agent.rotation.turn_right(),
                _ => {}
            }
        }

        let current: Vec<Cell> = self.agents.iter().map(|a| a.position).collect();
        let desired: Vec<Option<Cell>> = self
            .agents
            .iter()
            .zip(&acts)
            .map(|(agent, act)| {
                if *act != RwareAction::Forward {
                    return None;
                }
                let target = agent.position.step(agent.rotation);
                if !self.layout.contains(target) {
                    return None;
                }
                // Loaded robots cannot drive under stored shelves.
                if agent.carrying() && self.shelf_at(target).is_some() {
                    return None;
                }
                Some(target)
            })
            .collect();
        let moved = resolve_moves(&current, &desired);
        for (i, &cell) in moved.iter().enumerate() {
            if let Some(s) = self.agents[i].carried {
                let old = self.idx(self.shelves[s]);
                self.shelf_at[old] = None;
                self.shelves[s] = cell;
            }
            self.agents[i].position = cell;
        }
        for agent in &self.agents {
            if let Some(s) = agent.carried {
                let k = self.idx(self.shelves[s]);
                self.shelf_at[k] = Some(s);
            }
        }

        for i in 0..n {
            if acts[i] != RwareAction::ToggleLoad {
                continue;
            }
            let pos = self.agents[i].position;
            match self.agents[i].carried {
                None => {
                    if let Some(s) = self.shelf_at(pos) {
                        self.agents[i].carried = Some(s);
                        out.count("pickups", 1.0);
                    }
                }
                Some(_) => {
                    if self.layout.tag(pos) == Some(CellTag::Shelf) {
                        self.agents[i].carried = None;
                        out.count("dropoffs", 1.0);
                    }
                }
            }
        }

        for i in 0..n {
            let agent = &self.agents[i];
            let Some(s) = agent.carried else { continue };
            if self.layout.tag(agent.position) != Some(CellTag::Delivery) {
                continue;
            }
            let Some(slot) = self.requests.iter().position(|&r| r == s) else { continue };
            out.rewards[i] += 1.0;
            out.count("deliveries", 1.0);
            let candidates: Vec<usize> = (0..self.shelves.len()).filter(|k| !self.requests.contains(k)).collect();
            self.requests[slot] = candidates[rng.random_range(0..candidates.len())];
        }
        out
    }

    /// World cell seen at view position `(vr, vc)` by a robot at `pos`
    /// facing `heading`; the view's top row is straight ahead.
    pub fn view_cell(pos: Cell, heading: Direction, vr: usize, vc: usize) -> Cell {
        let half = (VIEW / 2) as i32;
        let dr = vr as i32 - half;
        let dc = vc as i32 - half;
        match heading {
            Direction::North => pos.offset(dr, dc),
            Direction::East => pos.offset(dc, -dr),
            Direction::South => pos.offset(-dr, -dc),
            Direction::West => pos.offset(-dc, dr),
        }
    }

    pub fn encode_obs(&self, agent: usize) -> Vec<f64> {
        let me = &self.agents[agent];
        let mut obs = vec![0.0; OBS_SIZE];
        let plane = VIEW * VIEW;
        for vr in 0..VIEW {
            for vc in 0..VIEW {
                let k = vr * VIEW + vc;
                let cell = Self::view_cell(me.position, me.rotation, vr, vc);
                let Some(tag) = self.layout.tag(cell) else {
                    obs[channel::BOUNDARY * plane + k] = 1.0;
                    continue;
                };
                if let Some(s) = self.shelf_at(cell) {
                    obs[channel::SHELVES * plane + k] = 1.0;
                    if self.requests.contains(&s) {
                        obs[channel::REQUESTED * plane + k] = 1.0;
                    }
                }
                if self.agents.iter().enumerate().any(|(j, a)| j != agent && a.position == cell) {
                    obs[channel::AGENTS * plane + k] = 1.0;
                }
                if tag == CellTag::Delivery {
                    obs[channel::DELIVERY * plane + k] = 1.0;
                }
            }
        }
        let base = CHANNELS * plane;
        obs[base + me.rotation.index()] = 1.0;
        obs[base + 4] = if me.carrying() { 1.0 } else { 0.0 };
        let under = self.shelf_at(me.position).filter(|&s| Some(s) != me.carried);
        obs[base + 5] = if under.is_some() { 1.0 } else { 0.0 };
        obs
    }

    pub fn ascii(&self) -> String {
        let mut s = String::new();
        for r in 0..self.layout.height as i32 {
            for c in 0..self.layout.width as i32 {
                let cell = Cell::new(r, c);
                let ch = if let Some(i) = self.agents.iter().position(|a| a.position == cell) {
                    char::from_digit(i as u32 % 10, 10).unwrap_or('A')
                } else if let Some(sh) = self.shelf_at(cell) {
                    if self.requests.contains(&sh) {
                        'R'
                    } else {
                        'x'
                    }
                } else if self.layout.tag(cell) == Some(CellTag::Delivery) {
                    'g'
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
