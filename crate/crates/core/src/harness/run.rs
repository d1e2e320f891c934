//! Episode loops for the active-inference agent and the frontier baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agent::AifAgent;
use crate::error::Result;
use crate::model::Action;
use crate::sim::{
    apply_events, Cell, EventKind, EventSchedule, FrontierAgent, Simulator, StepResult,
};

/// One row of a run record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub believed_x: f64,
    pub believed_y: f64,
    pub node: usize,
    pub num_nodes: usize,
    pub action: String,
    pub succeeded: bool,
    pub learning_gain: f64,
    pub inference_gain: f64,
    pub collision_cost: f64,
    pub preference_value: f64,
    pub efe_total: f64,
    pub surprise: f64,
    pub kidnap_suspected: bool,
    pub teleported: bool,
    pub coverage: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub steps: usize,
    pub stop_at_goal: bool,
    /// Teleport back to the start every this many steps.
    pub kidnap_every: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeOutcome {
    pub reached_goal: bool,
    pub steps: usize,
    /// Cells occupied after each step, starting with the initial cell.
    pub trail: Vec<Cell>,
    /// Steps at which the agent was teleported.
    pub teleports: Vec<usize>,
}

/// Apply events due at `t`. Returns (anything changed, agent teleported).
fn apply_scheduled(
    sim: &mut Simulator,
    events: &EventSchedule,
    spec: &EpisodeSpec,
    t: usize,
    rng: &mut impl Rng,
) -> Result<(bool, bool)> {
    let applied = apply_events(sim, events, t, rng)?;
    let mut teleported = applied.iter().any(|e| e.kind == EventKind::Kidnap);
    if let Some(k) = spec.kidnap_every {
        if k > 0 && t > 0 && t.is_multiple_of(k) {
            let s = sim.env().start();
            sim.teleport(s)?;
            teleported = true;
        }
    }
    Ok((teleported || !applied.is_empty(), teleported))
}

fn at_goal(sim: &Simulator) -> bool {
    sim.env().goal() == Some(sim.cell())
}

/// Run the agent for up to `spec.steps` steps, appending to `records`.
pub fn run_aif_episode(
    sim: &mut Simulator,
    agent: &mut AifAgent,
    events: &EventSchedule,
    spec: &EpisodeSpec,
    rng: &mut impl Rng,
    records: &mut Vec<StepRecord>,
) -> Result<EpisodeOutcome> {
    let mut out = EpisodeOutcome {
        trail: vec![sim.cell()],
        ..Default::default()
    };
    for t in 0..spec.steps {
        let (changed, teleported) = apply_scheduled(sim, events, spec, t, rng)?;
        if teleported {
            out.teleports.push(t);
            out.trail.push(sim.cell());
        }
        if changed || t == 0 {
            // The sensors keep running while the world changes under the agent.
            let still = StepResult {
                succeeded: true,
                pose: sim.pose(),
                distance: 0.0,
            };
            agent.observe(Action::Stay, &still, &sim.sense())?;
        }
        let action = agent.act()?;
        let efe = agent.last_efe();
        let step = sim.step(action);
        let sense = sim.sense();
        let rep = agent.observe(action, &step, &sense)?;
        out.trail.push(sim.cell());
        out.steps = t + 1;
        records.push(StepRecord {
            step: t,
            true_x: sense.pose.x,
            true_y: sense.pose.y,
            believed_x: rep.believed_pose.x,
            believed_y: rep.believed_pose.y,
            node: rep.node,
            num_nodes: agent.model().len(),
            action: action.label(),
            succeeded: step.succeeded,
            learning_gain: efe.learning_gain,
            inference_gain: efe.inference_gain,
            collision_cost: efe.collision_cost,
            preference_value: efe.preference_value,
            efe_total: efe.total,
            surprise: if rep.surprise.is_finite() {
                rep.surprise
            } else {
                f64::MAX
            },
            kidnap_suspected: rep.kidnap_suspected,
            teleported,
            coverage: sim.coverage(),
            distance: sim.distance(),
        });
        if spec.stop_at_goal && at_goal(sim) {
            out.reached_goal = true;
            break;
        }
    }
    Ok(out)
}

/// Same loop for the frontier baseline. EFE columns are zero.
pub fn run_frontier_episode(
    sim: &mut Simulator,
    agent: &mut FrontierAgent,
    events: &EventSchedule,
    spec: &EpisodeSpec,
    rng: &mut impl Rng,
    records: &mut Vec<StepRecord>,
) -> Result<EpisodeOutcome> {
    let mut out = EpisodeOutcome {
        trail: vec![sim.cell()],
        ..Default::default()
    };
    for t in 0..spec.steps {
        let (_, teleported) = apply_scheduled(sim, events, spec, t, rng)?;
        if teleported {
            out.teleports.push(t);
            out.trail.push(sim.cell());
        }
        let action = crate::sim::frontier_agent_step(agent, sim);
        let step = sim.step(action);
        let pose = sim.pose();
        out.trail.push(sim.cell());
        out.steps = t + 1;
        records.push(StepRecord {
            step: t,
            true_x: pose.x,
            true_y: pose.y,
            believed_x: pose.x,
            believed_y: pose.y,
            node: 0,
            num_nodes: 0,
            action: action.label(),
            succeeded: step.succeeded,
            learning_gain: 0.0,
            inference_gain: 0.0,
            collision_cost: 0.0,
            preference_value: 0.0,
            efe_total: 0.0,
            surprise: 0.0,
            kidnap_suspected: false,
            teleported,
            coverage: sim.coverage(),
            distance: sim.distance(),
        });
        if spec.stop_at_goal && at_goal(sim) {
            out.reached_goal = true;
            break;
        }
        if action == Action::Stay && !teleported {
            // Nothing left to explore; the remaining steps would all be Stay.
            break;
        }
    }
    Ok(out)
}
