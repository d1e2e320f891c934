//! Detour experiments: one agent, cumulative conditions, route tallies.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::sim::{Cell, GridEnv};

/// Route label per free cell: 1 through `A`, 2 through `B`, 3 otherwise.
/// Start and goal cells carry no label.
pub fn route_labels(env: &GridEnv) -> Result<BTreeMap<Cell, u8>> {
    let goal = env
        .goal()
        .ok_or_else(|| Error::EnvironmentMismatch("map has no goal".into()))?;
    let start = env.start();
    let a = env
        .junction('A')
        .ok_or_else(|| Error::EnvironmentMismatch("map has no junction A".into()))?;
    let b = env
        .junction('B')
        .ok_or_else(|| Error::EnvironmentMismatch("map has no junction B".into()))?;
    let mut labels = BTreeMap::new();
    for seed in env.free_cells() {
        if seed == start || seed == goal || labels.contains_key(&seed) {
            continue;
        }
        let mut comp = vec![seed];
        let mut q = VecDeque::from([seed]);
        let mut seen = std::collections::BTreeSet::from([seed]);
        while let Some((r, c)) = q.pop_front() {
            for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if !env.in_bounds(nr, nc) {
                    continue;
                }
                let n = (nr as usize, nc as usize);
                if env.is_wall(n) || n == start || n == goal || !seen.insert(n) {
                    continue;
                }
                comp.push(n);
                q.push_back(n);
            }
        }
        let label = if comp.contains(&a) {
            1
        } else if comp.contains(&b) {
            2
        } else {
            3
        };
        for c in comp {
            labels.insert(c, label);
        }
    }
    Ok(labels)
}

/// Route of a completed run: the label of the last cell before the goal.
pub fn classify_route(labels: &BTreeMap<Cell, u8>, trail: &[Cell], goal: Cell) -> Option<u8> {
    let end = trail.iter().position(|&c| c == goal)?;
    trail[..end]
        .iter()
        .rev()
        .find_map(|c| labels.get(c).copied())
}
