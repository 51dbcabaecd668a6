use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: i32,
    pub col: i32,
}

impl Cell {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn step(self, dir: Direction) -> Self {
        let (dr, dc) = dir.delta();
        Self::new(self.row + dr, self.col + dc)
    }

    pub fn offset(self, dr: i32, dc: i32) -> Self {
        Self::new(self.row + dr, self.col + dc)
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.row - other.row).abs() + (self.col - other.col).abs()
    }

    pub fn in_bounds(self, height: usize, width: usize) -> bool {
        self.row >= 0 && self.col >= 0 && (self.row as usize) < height && (self.col as usize) < width
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }
}

/// Compass heading; the declaration order (N, E, S, W) is the one-hot order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::East, Direction::South, Direction::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    /// `(d_row, d_col)`; north is decreasing row.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::North => (-1, 0),
            Direction::East => (0, 1),
            Direction::South => (1, 0),
            Direction::West => (0, -1),
        }
    }

    pub fn turn_left(self) -> Self {
        Self::from_index(self.index() + 3)
    }

    pub fn turn_right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn opposite(self) -> Self {
        Self::from_index(self.index() + 2)
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self.index()] = 1.0;
        v
    }
}

/// Resolves simultaneous single-cell moves.
///
/// `desired[i]` is `None` for an agent that stays (or whose move is blocked
/// by the static world). A move fails when another agent targets the same
/// cell, when two agents would swap, or when the target stays occupied by an
/// agent that does not leave. Failures are propagated to a fixed point, so
/// the result does not depend on agent order.
pub fn resolve_moves(current: &[Cell], desired: &[Option<Cell>]) -> Vec<Cell> {
    let n = current.len();
    let mut moving: Vec<bool> = desired.iter().zip(current).map(|(d, c)| d.is_some_and(|d| d != *c)).collect();
    let target = |i: usize| desired[i].unwrap_or(current[i]);
    loop {
        let blocked: Vec<usize> = (0..n)
            .filter(|&i| moving[i])
            .filter(|&i| {
                let t = target(i);
                (0..n).any(|j| {
                    j != i
                        && ((moving[j] && target(j) == t)
                            || (!moving[j] && current[j] == t)
                            || (moving[j] && target(j) == current[i] && current[j] == t))
                })
            })
            .collect();
        if blocked.is_empty() {
            break;
        }
        for i in blocked {
            moving[i] = false;
        }
    }
    (0..n).map(|i| if moving[i] { target(i) } else { current[i] }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn contested_cell_blocks_both() {
        let cur = [Cell::new(0, 0), Cell::new(0, 2)];
        let out = resolve_moves(&cur, &[Some(Cell::new(0, 1)), Some(Cell::new(0, 1))]);
        assert_eq!(out, cur.to_vec());
    }

    #[test]
    fn swaps_are_blocked() {
        let cur = [Cell::new(0, 0), Cell::new(0, 1)];
        let out = resolve_moves(&cur, &[Some(Cell::new(0, 1)), Some(Cell::new(0, 0))]);
        assert_eq!(out, cur.to_vec());
    }

    #[test]
    fn following_a_leaving_agent_succeeds() {
        let cur = [Cell::new(0, 0), Cell::new(0, 1)];
        let out = resolve_moves(&cur, &[Some(Cell::new(0, 1)), Some(Cell::new(0, 2))]);
        assert_eq!(out, vec![Cell::new(0, 1), Cell::new(0, 2)]);
    }

    #[test]
    fn blocked_chain_propagates() {
        let cur = [Cell::new(0, 0), Cell::new(0, 1), Cell::new(0, 3)];
        // 1 and 2 contest (0,2); 0 follows 1 and must fail too.
        let out = resolve_moves(
            &cur,
            &[Some(Cell::new(0, 1)), Some(Cell::new(0, 2)), Some(Cell::new(0, 2))],
        );
        assert_eq!(out, cur.to_vec());
    }

    /// Every two-agent move combination on a 2x2 grid.
    #[test]
    fn exhaustive_two_agent_micro_grid() {
        let cells: Vec<Cell> = (0..2).flat_map(|r| (0..2).map(move |c| Cell::new(r, c))).collect();
        let moves = |c: Cell| -> Vec<Option<Cell>> {
            let mut m = vec![None];
            m.extend(Direction::ALL.iter().map(|&d| c.step(d)).filter(|n| n.in_bounds(2, 2)).map(Some));
            m
        };
        for &a in &cells {
            for &b in &cells {
                if a == b {
                    continue;
                }
                for da in moves(a) {
                    for db in moves(b) {
                        let out = resolve_moves(&[a, b], &[da, db]);
                        assert_ne!(out[0], out[1]);
                        let ta = da.unwrap_or(a);
                        let tb = db.unwrap_or(b);
                        if ta == tb {
                            assert_eq!(out, vec![a, b], "same target must freeze both");
                        }
                        if ta == b && tb == a {
                            assert_eq!(out, vec![a, b], "swap must freeze both");
                        }
                        // Reordering agents gives the mirrored result.
                        let rev = resolve_moves(&[b, a], &[db, da]);
                        assert_eq!(rev, vec![out[1], out[0]]);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn positions_stay_distinct(seed in prop::collection::vec((0i32..4, 0i32..4, 0usize..5), 1..6)) {
            let mut cur: Vec<Cell> = Vec::new();
            let mut desired = Vec::new();
            for (r, c, a) in seed {
                let cell = Cell::new(r, c);
                if cur.contains(&cell) {
                    continue;
                }
                cur.push(cell);
                desired.push(if a == 4 { None } else {
                    let t = cell.step(Direction::from_index(a));
                    t.in_bounds(4, 4).then_some(t)
                });
            }
            let out = resolve_moves(&cur, &desired);
            for i in 0..out.len() {
                for j in i + 1..out.len() {
                    prop_assert_ne!(out[i], out[j]);
                }
                prop_assert!(out[i] == cur[i] || Some(out[i]) == desired[i]);
            }
        }
    }
}
