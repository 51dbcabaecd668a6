//! Boulder push.
//!
//! A box spanning one cell per agent has to be pushed in a fixed direction
//! until it reaches a goal line. The box only moves when every box cell has
//! an agent directly behind it walking into it in the same step.

use rand::Rng;

use super::{resolve_moves, Cell, Direction, GridLayout, Outcome};
use crate::posg::{EnvError, TaskSpec};
use crate::rng::StreamRng;

pub const VIEW: usize = 9;
pub const OBS_SIZE: usize = VIEW * VIEW * 2 + 4;
/// Actions are the four headings in `Direction` order (N, E, S, W).
pub const N_ACTIONS: usize = 4;

pub const PUSH_REWARD: f64 = 0.1;
pub const GOAL_REWARD: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BpushState {
    pub agents: Vec<Cell>,
    /// Ordered along the axis perpendicular to `direction`.
    pub box_cells: Vec<Cell>,
    pub direction: Direction,
    /// Row (north/south pushes) or column (east/west pushes) the box must
    /// reach.
    pub goal_line: i32,
}

impl BpushState {
    /// Cells between the box and the goal line along the push direction.
    pub fn goal_distance(&self) -> i32 {
        let c = self.box_cells[0];
        match self.direction {
            Direction::North | Direction::South => (c.row - self.goal_line).abs(),
            Direction::East | Direction::West => (c.col - self.goal_line).abs(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BpushWorld {
    pub n_agents: usize,
    pub width: usize,
    pub height: usize,
    /// Reward for a failed push attempt (0 in the plain task).
    pub penalty: f64,
    pub state: BpushState,
}

impl BpushWorld {
    pub fn new(task: &TaskSpec, layout: &GridLayout) -> Result<Self, EnvError> {
        let n = task.n_agents;
        let span = layout.width.min(layout.height);
        if layout.width < 3 || layout.height < 3 || n > span {
            return Err(EnvError::InvalidTask(format!(
                "boulder push needs a grid of at least 3x3 and wider than the team, got {}x{} for {n} agents",
                layout.width, layout.height
            )));
        }
        if layout.width * layout.height < 2 * n + 2 {
            return Err(EnvError::InvalidTask("grid too small for agents and box".into()));
        }
        Ok(Self {
            n_agents: n,
            width: layout.width,
            height: layout.height,
            penalty: -task.param("penalty", 0.0).abs(),
            state: BpushState {
                agents: vec![Cell::new(0, 0); n],
                box_cells: Vec::new(),
                direction: Direction::North,
                goal_line: 0,
            },
        })
    }

    fn contains(&self, c: Cell) -> bool {
        c.in_bounds(self.height, self.width)
    }

    pub fn reset(&mut self, rng: &mut StreamRng) {
        let n = self.n_agents as i32;
        let (h, w) = (self.height as i32, self.width as i32);
        let direction = Direction::from_index(rng.random_range(0..4));
        // `lead` is the box coordinate along the push axis; one cell behind
        // it must stay inside the grid for the pushers.
        let (box_cells, goal_line) = match direction {
            Direction::North | Direction::South => {
                let lead = rng.random_range(1..h - 1);
                let goal = if direction == Direction::North {
                    rng.random_range(0..lead)
                } else {
                    rng.random_range(lead + 1..h)
                };
                let c0 = rng.random_range(0..=w - n);
                ((0..n).map(|k| Cell::new(lead, c0 + k)).collect::<Vec<_>>(), goal)
            }
            Direction::East | Direction::West => {
                let lead = rng.random_range(1..w - 1);
                let goal = if direction == Direction::West {
                    rng.random_range(0..lead)
                } else {
                    rng.random_range(lead + 1..w)
                };
                let r0 = rng.random_range(0..=h - n);
                ((0..n).map(|k| Cell::new(r0 + k, lead)).collect::<Vec<_>>(), goal)
            }
        };
        let mut free: Vec<Cell> = (0..h)
            .flat_map(|r| (0..w).map(move |c| Cell::new(r, c)))
            .filter(|c| !box_cells.contains(c))
            .collect();
        let mut agents = Vec::with_capacity(self.n_agents);
        for _ in 0..self.n_agents {
            let k = rng.random_range(0..free.len());
            agents.push(free.swap_remove(k));
        }
        self.state = BpushState {
            agents,
            box_cells,
            direction,
            goal_line,
        };
    }

    /// Replaces the state (tests and scripted scenarios).
    pub fn set_state(&mut self, state: BpushState) {
        assert_eq!(state.agents.len(), self.n_agents);
        assert_eq!(state.box_cells.len(), self.n_agents);
        self.state = state;
    }

    pub fn step(&mut self, actions: &[usize]) -> Outcome {
        let n = self.n_agents;
        let mut out = Outcome::zeros(n);
        let st = &self.state;
        let dirs: Vec<Direction> = actions.iter().map(|&a| Direction::from_index(a)).collect();
        let targets: Vec<Cell> = st.agents.iter().zip(&dirs).map(|(p, &d)| p.step(d)).collect();
        let into_box: Vec<bool> = targets.iter().map(|t| st.box_cells.contains(t)).collect();

        let ahead: Vec<Cell> = st.box_cells.iter().map(|c| c.step(st.direction)).collect();
        let pusher_of = |cell: &Cell| {
            let behind = cell.step(st.direction.opposite());
            (0..n).find(|&i| st.agents[i] == behind && dirs[i] == st.direction)
        };
        let pushers: Vec<Option<usize>> = st.box_cells.iter().map(pusher_of).collect();
        let pushed = pushers.iter().all(Option::is_some)
            && ahead.iter().all(|&c| self.contains(c) && !st.agents.contains(&c));

        let new_box = if pushed { ahead.clone() } else { st.box_cells.clone() };
        let desired: Vec<Option<Cell>> = (0..n)
            .map(|i| {
                let t = targets[i];
                if !self.contains(t) || new_box.contains(&t) {
                    return None;
                }
                if into_box[i] && !pushed {
                    return None;
                }
                Some(t)
            })
            .collect();
        let moved = resolve_moves(&st.agents, &desired);

        if pushed {
            out.count("pushes", 1.0);
            for r in &mut out.rewards {
                *r += PUSH_REWARD;
            }
        } else {
            for i in 0..n {
                if into_box[i] {
                    out.rewards[i] += self.penalty;
                    out.count("failed_pushes", 1.0);
                }
            }
        }
        self.state.agents = moved;
        self.state.box_cells = new_box;
        if self.state.goal_distance() == 0 {
            out.terminal = true;
            out.count("goals", 1.0);
            for r in &mut out.rewards {
                *r += GOAL_REWARD;
            }
        }
        out
    }

    pub fn encode_obs(&self, agent: usize) -> Vec<f64> {
        let mut obs = vec![0.0; OBS_SIZE];
        let me = self.state.agents[agent];
        let half = (VIEW / 2) as i32;
        let plane = VIEW * VIEW;
        let slot = |c: Cell| {
            let dr = c.row - me.row + half;
            let dc = c.col - me.col + half;
            (dr >= 0 && dc >= 0 && dr < VIEW as i32 && dc < VIEW as i32).then(|| dr as usize * VIEW + dc as usize)
        };
        for (j, &a) in self.state.agents.iter().enumerate() {
            if j != agent {
                if let Some(k) = slot(a) {
                    obs[k] = 1.0;
                }
            }
        }
        for &b in &self.state.box_cells {
            if let Some(k) = slot(b) {
                obs[plane + k] = 1.0;
            }
        }
        obs[2 * plane + self.state.direction.index()] = 1.0;
        obs
    }

    pub fn ascii(&self) -> String {
        let mut s = String::new();
        for r in 0..self.height as i32 {
            for c in 0..self.width as i32 {
                let cell = Cell::new(r, c);
                let on_goal = match self.state.direction {
                    Direction::North | Direction::South => r == self.state.goal_line,
                    Direction::East | Direction::West => c == self.state.goal_line,
                };
                let ch = if let Some(i) = self.state.agents.iter().position(|&a| a == cell) {
                    char::from_digit(i as u32 % 10, 10).unwrap_or('A')
                } else if self.state.box_cells.contains(&cell) {
                    'B'
                } else if on_goal {
                    '='
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
