//! Deterministic grid-world simulator.
//!
//! The agent sits at cell centres. A move of `step_length` metres along a
//! heading lands on the nearest cell centre and succeeds when the straight
//! segment to it is free. Segments are traced at 5 cm; a diagonal cell
//! change additionally needs both orthogonal cells free, so nothing slips
//! between two walls touching at a corner.

pub mod env;
pub mod events;
pub mod frontier;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, ObservationSymbol, Pose, HEADINGS};
use crate::planner::RayScan;

pub use env::{Cell, GridEnv, SymbolMode};
pub use events::{apply_events, AppliedEvent, Event, EventKind, EventSchedule};
pub use frontier::{frontier_agent_step, FrontierAgent};

const SAMPLE_STEP: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Metres travelled by one move action.
    pub step_length: f64,
    /// Range of the ray sensor and of coverage.
    pub lidar_range: f64,
    /// Chance that a ray reports the opposite of the truth. Ground truth for
    /// motion and coverage is unaffected.
    pub ray_flip_prob: f64,
    pub noise_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_length: 1.0,
            lidar_range: 3.0,
            ray_flip_prob: 0.0,
            noise_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub succeeded: bool,
    pub pose: Pose,
    /// Metres actually travelled.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SenseResult {
    pub obs: ObservationSymbol,
    pub scan: RayScan,
    pub pose: Pose,
}

#[derive(Clone, Debug)]
pub struct Simulator {
    env: GridEnv,
    cfg: SimConfig,
    walls: Vec<bool>,
    cell: Cell,
    seen: Vec<bool>,
    seen_free: usize,
    total_free: usize,
    distance: f64,
    steps: u64,
}

impl Simulator {
    pub fn new(env: GridEnv, cfg: SimConfig) -> Result<Self> {
        if !(cfg.step_length >= 1.0) || !(cfg.lidar_range > 0.0) {
            return Err(Error::InvalidArgument(
                "step_length must be >= 1 cell and lidar_range > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&cfg.ray_flip_prob) {
            return Err(Error::InvalidArgument(
                "ray_flip_prob must lie in [0, 1]".into(),
            ));
        }
        let walls: Vec<bool> = (0..env.height() * env.width())
            .map(|k| env.is_wall((k / env.width(), k % env.width())))
            .collect();
        let total_free = walls.iter().filter(|w| !**w).count();
        let cell = env.start();
        let mut sim = Self {
            seen: vec![false; walls.len()],
            env,
            cfg,
            walls,
            cell,
            seen_free: 0,
            total_free,
            distance: 0.0,
            steps: 0,
        };
        sim.observe_coverage();
        Ok(sim)
    }

    pub fn env(&self) -> &GridEnv {
        &self.env
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn cell(&self) -> Cell {
        self.cell
    }

    pub fn pose(&self) -> Pose {
        self.env.cell_pose(self.cell)
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    fn idx(&self, c: Cell) -> usize {
        c.0 * self.env.width() + c.1
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.walls[self.idx(c)]
    }

    fn blocked_at(&self, p: &Pose) -> Option<Cell> {
        match self.env.pose_cell(p) {
            Some(c) if !self.is_blocked(c) => Some(c),
            _ => None,
        }
    }

    /// Distance along `a → b` at which the trace first hits an obstacle, or
    /// `None` when the whole segment is free. Samples inside `until` stop the
    /// trace successfully.
    fn trace(&self, a: Pose, b: Pose, until: Option<Cell>) -> Option<f64> {
        let len = a.distance(&b);
        let n = (len / SAMPLE_STEP).ceil().max(1.0) as usize;
        let mut prev: Option<Cell> = None;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let p = Pose::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
            let here = self.env.pose_cell(&p);
            if let (Some(u), Some(h)) = (until, here) {
                if u == h && !self.corner_blocked(prev, h) {
                    return None;
                }
            }
            let Some(cell) = self.blocked_at(&p) else {
                return Some(len * t);
            };
            if self.corner_blocked(prev, cell) {
                return Some(len * t);
            }
            prev = Some(cell);
        }
        None
    }

    fn corner_blocked(&self, prev: Option<Cell>, cur: Cell) -> bool {
        match prev {
            Some(p) if p.0 != cur.0 && p.1 != cur.1 => {
                self.is_blocked((p.0, cur.1)) || self.is_blocked((cur.0, p.1))
            }
            _ => false,
        }
    }

    pub fn segment_free(&self, a: Pose, b: Pose) -> bool {
        self.trace(a, b, None).is_none()
    }

    /// Whether a move along `action` from the current cell would succeed.
    pub fn move_blocked(&self, action: Action) -> bool {
        if action.is_stay() {
            return false;
        }
        match self
            .env
            .landing_cell(self.cell, action, self.cfg.step_length)
        {
            Some(to) => !self.segment_free(self.pose(), self.env.cell_pose(to)),
            None => true,
        }
    }

    /// Free distance along a heading, capped at the lidar range.
    pub fn ray_free(&self, action: Action) -> f64 {
        let (ux, uy) = action.unit();
        let r = self.cfg.lidar_range;
        let o = self.pose();
        match self.trace(o, o.translated(ux * r, uy * r), None) {
            Some(d) => d,
            None => r,
        }
    }

    pub fn step(&mut self, action: Action) -> StepResult {
        self.steps += 1;
        let from = self.pose();
        if !action.is_stay() && !self.move_blocked(action) {
            if let Some(to) = self
                .env
                .landing_cell(self.cell, action, self.cfg.step_length)
            {
                self.cell = to;
                let d = from.distance(&self.pose());
                self.distance += d;
                self.observe_coverage();
                return StepResult {
                    succeeded: true,
                    pose: self.pose(),
                    distance: d,
                };
            }
        }
        StepResult {
            succeeded: action.is_stay(),
            pose: from,
            distance: 0.0,
        }
    }

    pub fn sense(&self) -> SenseResult {
        let mut collision = [false; HEADINGS];
        let mut free_distance = [0.0; HEADINGS];
        for h in 0..HEADINGS {
            let a = Action::heading(h);
            collision[h] = self.move_blocked(a);
            free_distance[h] = self.ray_free(a);
        }
        if self.cfg.ray_flip_prob > 0.0 {
            // one stream per step so repeated senses agree
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.noise_seed);
            rng.set_stream(self.steps);
            for h in 0..HEADINGS {
                if rng.random_bool(self.cfg.ray_flip_prob) {
                    collision[h] = !collision[h];
                    free_distance[h] = if collision[h] {
                        free_distance[h].min(0.5)
                    } else {
                        self.cfg.lidar_range
                    };
                }
            }
        }
        SenseResult {
            obs: ObservationSymbol::new(self.env.symbol(self.cell)),
            scan: RayScan {
                collision,
                free_distance,
                range: self.cfg.lidar_range,
            },
            pose: self.pose(),
        }
    }

    /// Cells within lidar range and line of sight of `from`, with whether
    /// each is blocked. Blocked cells are reported when the sight line
    /// reaches them unobstructed.
    pub fn visible_cells(&self, from: Cell) -> Vec<(Cell, bool)> {
        let r = self.cfg.lidar_range;
        let ri = r.ceil() as i64;
        let o = self.env.cell_pose(from);
        let mut out = Vec::new();
        for dr in -ri..=ri {
            for dc in -ri..=ri {
                let (rr, cc) = (from.0 as i64 + dr, from.1 as i64 + dc);
                if !self.env.in_bounds(rr, cc) || ((dr * dr + dc * dc) as f64).sqrt() > r + 1e-9 {
                    continue;
                }
                let cell = (rr as usize, cc as usize);
                if self
                    .trace(o, self.env.cell_pose(cell), Some(cell))
                    .is_none()
                {
                    out.push((cell, self.is_blocked(cell)));
                }
            }
        }
        out
    }

    fn observe_coverage(&mut self) {
        for (c, blocked) in self.visible_cells(self.cell) {
            let k = self.idx(c);
            if !blocked && !self.seen[k] {
                self.seen[k] = true;
                self.seen_free += 1;
            }
        }
    }

    /// Fraction of free cells seen so far.
    pub fn coverage(&self) -> f64 {
        self.seen_free as f64 / self.total_free.max(1) as f64
    }

    /// Move without odometry.
    pub fn teleport(&mut self, cell: Cell) -> Result<()> {
        if !self.env.in_bounds(cell.0 as i64, cell.1 as i64) || self.is_blocked(cell) {
            return Err(Error::Event(format!(
                "cannot teleport into blocked cell {cell:?}"
            )));
        }
        self.cell = cell;
        self.observe_coverage();
        Ok(())
    }

    pub fn set_blocked(&mut self, cell: Cell, blocked: bool) -> Result<()> {
        if !self.env.in_bounds(cell.0 as i64, cell.1 as i64) {
            return Err(Error::Event(format!("cell {cell:?} outside the map")));
        }
        if blocked && cell == self.cell {
            return Err(Error::Event(format!(
                "cannot block the agent's cell {cell:?}"
            )));
        }
        let k = self.idx(cell);
        if self.walls[k] != blocked {
            self.walls[k] = blocked;
            if blocked {
                self.total_free -= 1;
                if self.seen[k] {
                    self.seen[k] = false;
                    self.seen_free -= 1;
                }
            } else {
                self.total_free += 1;
            }
        }
        Ok(())
    }

    /// Reset pose, distance and coverage, keeping obstacles.
    pub fn reset_to(&mut self, cell: Cell) -> Result<()> {
        self.teleport(cell)?;
        self.distance = 0.0;
        self.seen.iter_mut().for_each(|s| *s = false);
        self.seen_free = 0;
        self.observe_coverage();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use env::TOLMAN_MAP;

    fn tolman() -> Simulator {
        Simulator::new(
            GridEnv::parse(TOLMAN_MAP).unwrap(),
            SimConfig {
                step_length: 1.0,
                lidar_range: 1.0,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn moves_and_collisions() {
        let mut s = tolman();
        assert_eq!(s.cell(), (7, 3));
        let sense = s.sense();
        // North open, south wall.
        assert!(!sense.scan.collision[3]);
        assert!(sense.scan.collision[9]);
        // Diagonals pass walls at corners only when both sides are free.
        assert!(s.move_blocked(Action::heading(1)));
        let r = s.step(Action::heading(9));
        assert!(!r.succeeded && r.distance == 0.0);
        let r = s.step(Action::heading(3));
        assert!(r.succeeded);
        assert_eq!(s.cell(), (6, 3));
        assert!((s.distance() - 1.0).abs() < 1e-12);
        assert!(s.step(Action::Stay).succeeded);
    }

    #[test]
    fn flipped_rays() {
        let noisy = |p: f64| {
            Simulator::new(
                GridEnv::parse(TOLMAN_MAP).unwrap(),
                SimConfig {
                    lidar_range: 1.0,
                    ray_flip_prob: p,
                    noise_seed: 4,
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let truth = tolman().sense().scan;
        let all = noisy(1.0).sense().scan;
        for h in 0..HEADINGS {
            assert_ne!(truth.collision[h], all.collision[h]);
        }
        assert_eq!(noisy(0.0).sense().scan, truth);
        // same step, same noise; the next step draws afresh
        let mut a = noisy(0.3);
        assert_eq!(a.sense().scan, a.sense().scan);
        let mut b = noisy(0.3);
        let scans: Vec<RayScan> = (0..20)
            .map(|_| {
                a.step(Action::Stay);
                a.sense().scan
            })
            .collect();
        for s in &scans {
            b.step(Action::Stay);
            assert_eq!(&b.sense().scan, s);
        }
        assert!(scans.windows(2).any(|w| w[0] != w[1]));
        assert!(Simulator::new(
            GridEnv::parse(TOLMAN_MAP).unwrap(),
            SimConfig {
                ray_flip_prob: 1.5,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn ray_distance_to_wall() {
        let s = Simulator::new(
            GridEnv::parse(TOLMAN_MAP).unwrap(),
            SimConfig {
                step_length: 1.0,
                lidar_range: 8.0,
                ..Default::default()
            },
        )
        .unwrap();
        // From S going north: free cells at y = 2..=7, wall boundary at y = 7.5.
        let d = s.ray_free(Action::heading(3));
        assert!((d - 6.5).abs() < 0.06, "{d}");
        let d = s.ray_free(Action::heading(9));
        assert!((d - 0.5).abs() < 0.06, "{d}");
    }

    #[test]
    fn coverage_grows_and_obstacles_block() {
        let mut s = tolman();
        let c0 = s.coverage();
        assert!(c0 > 0.0 && c0 < 1.0);
        s.step(Action::heading(3));
        assert!(s.coverage() > c0);
        s.set_blocked((5, 3), true).unwrap();
        assert!(s.move_blocked(Action::heading(3)));
        s.set_blocked((5, 3), false).unwrap();
        assert!(!s.move_blocked(Action::heading(3)));
        assert!(s.set_blocked(s.cell(), true).is_err());
        assert!(s.teleport((0, 0)).is_err());
    }
}
