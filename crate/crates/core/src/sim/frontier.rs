//! Nearest-frontier exploration baseline.
//!
//! The agent keeps an occupancy grid of what its range sensor has seen and
//! walks (8-connected, one cell per step) to the nearest known-free cell with
//! an unknown 4-neighbour. Ties go to the lowest `(row, col)`.

use std::collections::VecDeque;

use super::{Cell, Simulator};
use crate::model::{Action, HEADINGS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Known {
    Unknown,
    Free,
    Blocked,
}

#[derive(Clone, Debug)]
pub struct FrontierAgent {
    width: usize,
    height: usize,
    known: Vec<Known>,
}

const NEIGHBOURS8: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];
const NEIGHBOURS4: [(i64, i64); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

impl FrontierAgent {
    pub fn new(sim: &Simulator) -> Self {
        let (width, height) = (sim.env().width(), sim.env().height());
        let mut a = Self {
            width,
            height,
            known: vec![Known::Unknown; width * height],
        };
        a.update(sim);
        a
    }

    fn get(&self, r: i64, c: i64) -> Known {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            Known::Blocked
        } else {
            self.known[r as usize * self.width + c as usize]
        }
    }

    /// Fold the current sensor view into the occupancy grid.
    pub fn update(&mut self, sim: &Simulator) {
        for (c, blocked) in sim.visible_cells(sim.cell()) {
            self.known[c.0 * self.width + c.1] = if blocked { Known::Blocked } else { Known::Free };
        }
    }

    pub fn known_free(&self) -> usize {
        self.known.iter().filter(|k| **k == Known::Free).count()
    }

    fn is_frontier(&self, r: i64, c: i64) -> bool {
        self.get(r, c) == Known::Free
            && NEIGHBOURS4
                .iter()
                .any(|(dr, dc)| self.get(r + dr, c + dc) == Known::Unknown)
    }

    /// First cell on a shortest known-free path to the nearest frontier.
    pub fn next_cell(&self, from: Cell) -> Option<Cell> {
        let idx = |r: i64, c: i64| r as usize * self.width + c as usize;
        let mut dist = vec![usize::MAX; self.known.len()];
        let mut first: Vec<Option<Cell>> = vec![None; self.known.len()];
        let mut q = VecDeque::new();
        dist[idx(from.0 as i64, from.1 as i64)] = 0;
        q.push_back((from.0 as i64, from.1 as i64));
        let mut best: Option<(usize, Cell)> = None;
        while let Some((r, c)) = q.pop_front() {
            let d = dist[idx(r, c)];
            if let Some((bd, _)) = best {
                if d > bd {
                    break;
                }
            }
            if d > 0 && self.is_frontier(r, c) {
                let cell = (r as usize, c as usize);
                if best.is_none_or(|(_, bc)| cell < bc) {
                    best = Some((d, cell));
                }
                continue;
            }
            for (dr, dc) in NEIGHBOURS8 {
                let (nr, nc) = (r + dr, c + dc);
                if self.get(nr, nc) != Known::Free {
                    continue;
                }
                if dr != 0
                    && dc != 0
                    && (self.get(r + dr, c) != Known::Free || self.get(r, c + dc) != Known::Free)
                {
                    continue;
                }
                let k = idx(nr, nc);
                if dist[k] == usize::MAX {
                    dist[k] = d + 1;
                    first[k] = if d == 0 {
                        Some((nr as usize, nc as usize))
                    } else {
                        first[idx(r, c)]
                    };
                    q.push_back((nr, nc));
                }
            }
        }
        best.and_then(|(_, cell)| first[cell.0 * self.width + cell.1])
    }
}

/// Update the occupancy grid from the simulator and return the heading of
/// the next move, or Stay once nothing is left to explore. The simulator must
/// use one-cell steps.
pub fn frontier_agent_step(agent: &mut FrontierAgent, sim: &Simulator) -> Action {
    agent.update(sim);
    let from = sim.cell();
    let Some(next) = agent.next_cell(from) else {
        return Action::Stay;
    };
    (0..HEADINGS)
        .map(Action::heading)
        .find(|&a| sim.env().landing_cell(from, a, 1.0) == Some(next))
        .unwrap_or(Action::Stay)
}
