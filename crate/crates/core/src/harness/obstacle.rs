//! Moving-obstacle experiment: an obstacle is shifted onto a place the agent
//! has already visited, and the map has to forget the old edges and grow a
//! node where the obstacle used to stand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::agent::{AgentParams, AifAgent};
use super::run::{run_aif_episode, EpisodeSpec, StepRecord};
use crate::error::{Error, Result};
use crate::model::{Action, GenerativeModel, HEADINGS};
use crate::sim::{Cell, Event, EventSchedule, GridEnv, SimConfig, Simulator};

#[derive(Clone, Debug)]
pub struct ObstacleSpec {
    pub sim: SimConfig,
    pub params: AgentParams,
    /// Where the obstacle stands from the first step.
    pub first: Cell,
    /// Where it is moved to.
    pub second: Cell,
    pub move_step: usize,
    pub steps: usize,
}

impl ObstacleSpec {
    /// The scenario as an event schedule over the whole run.
    pub fn events(&self) -> Result<EventSchedule> {
        EventSchedule::new(vec![
            Event::obstacle(0, self.first, true),
            Event::obstacle(self.move_step, self.first, false),
            Event::obstacle(self.move_step, self.second, true),
        ])
    }
}

/// An edge into the blocked node, before and after the move.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeChange {
    pub from: usize,
    pub action: Action,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug)]
pub struct ObstacleOutcome {
    /// Visited node sitting on the obstacle's new cell, if any.
    pub blocked_node: Option<usize>,
    pub edges: Vec<EdgeChange>,
    /// Nodes created after the move within one spacing of the old cell.
    pub new_nodes_near_former: Vec<usize>,
    pub before: GenerativeModel,
    pub after: GenerativeModel,
    pub records: Vec<StepRecord>,
}

impl ObstacleOutcome {
    /// Largest after/before ratio over the edges into the blocked node.
    pub fn worst_ratio(&self) -> Option<f64> {
        self.edges
            .iter()
            .map(|e| e.after / e.before)
            .reduce(f64::max)
    }
}

pub fn run_obstacle_scenario(
    env: &GridEnv,
    spec: &ObstacleSpec,
    seed: u64,
) -> Result<ObstacleOutcome> {
    if spec.move_step == 0 || spec.move_step >= spec.steps {
        return Err(Error::InvalidArgument(
            "move_step must fall inside the run".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b57_ac1e);
    let mut sim_cfg = spec.sim.clone();
    sim_cfg.noise_seed ^= seed;
    let mut sim = Simulator::new(env.clone(), sim_cfg)?;
    let mut agent = AifAgent::new(&sim.sense(), env.num_symbols(), spec.params.clone(), seed)?;
    let mut records = Vec::new();

    let before_move = EventSchedule::new(vec![Event::obstacle(0, spec.first, true)])?;
    let ep = EpisodeSpec {
        steps: spec.move_step,
        stop_at_goal: false,
        kidnap_every: None,
    };
    run_aif_episode(
        &mut sim,
        &mut agent,
        &before_move,
        &ep,
        &mut rng,
        &mut records,
    )?;
    let before = agent.model().clone();

    let the_move = EventSchedule::new(vec![
        Event::obstacle(0, spec.first, false),
        Event::obstacle(0, spec.second, true),
    ])?;
    let ep = EpisodeSpec {
        steps: spec.steps - spec.move_step,
        ..ep
    };
    let mut tail = Vec::new();
    run_aif_episode(&mut sim, &mut agent, &the_move, &ep, &mut rng, &mut tail)?;
    for mut r in tail {
        r.step += spec.move_step;
        records.push(r);
    }
    let after = agent.model().clone();

    let spacing = before.spacing();
    let second = env.cell_pose(spec.second);
    let blocked_node = (0..before.len())
        .filter(|&i| before.is_visited(i) && before.anchor(i).distance(&second) <= 0.5 * spacing)
        .min_by(|&a, &b| {
            before
                .anchor(a)
                .distance(&second)
                .total_cmp(&before.anchor(b).distance(&second))
        });

    let mut edges = Vec::new();
    if let Some(b) = blocked_node {
        for from in (0..before.len()).filter(|&j| j != b) {
            for action in (0..HEADINGS).map(Action::heading) {
                let p = before.transition_prob(action, from, b);
                if p > 0.0 && before.stored_count(action, from, b).is_some() {
                    edges.push(EdgeChange {
                        from,
                        action,
                        before: p,
                        after: after.transition_prob(action, from, b),
                    });
                }
            }
        }
    }

    let first = env.cell_pose(spec.first);
    let new_nodes_near_former = (before.len()..after.len())
        .filter(|&i| after.anchor(i).distance(&first) <= spacing + 1e-9)
        .collect();

    Ok(ObstacleOutcome {
        blocked_node,
        edges,
        new_nodes_near_former,
        before,
        after,
        records,
    })
}
