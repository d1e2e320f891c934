//! The active-inference agent loop: plan, act, infer, learn, grow.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{
    infer_joint, learn_observation, predict_pose, relocalization_belief, surprise,
    transition_coherence, update_kidnap_state, InferenceConfig, KidnapState,
};
use crate::model::{Action, Belief, GenerativeModel, ObservationSymbol, Pose, HEADINGS};
use crate::planner::{
    learn_transition, plan, predicted_transition_sweep, select_policy, EFEBreakdown, MotionOutcome,
    PlannerConfig,
};
use crate::sim::{SenseResult, StepResult};
use crate::structure::{
    accept_expansion, apply_link, delta_free_energy, expansion_gain, grow, grow_in_place,
    propose_candidates, StructureConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Distance between imagined poses, in metres.
    pub spacing: f64,
    /// Steps of `(action, observation)` history used to score growth.
    pub window: usize,
    /// Planning starts from the most likely states up to this much mass.
    pub plan_mass: f64,
    pub plan_max_states: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            spacing: 1.0,
            window: 6,
            plan_mass: 0.95,
            plan_max_states: 6,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub structure: StructureConfig,
}

/// What the agent concluded after one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub node: usize,
    pub believed_pose: Pose,
    pub surprise: f64,
    pub kidnap_suspected: bool,
    pub newly_suspected: bool,
    pub permission: bool,
    pub grown: usize,
}

#[derive(Clone, Debug)]
pub struct AifAgent {
    params: AgentParams,
    model: GenerativeModel,
    belief: Belief,
    kidnap: KidnapState,
    rng: ChaCha8Rng,
    /// `(action, observation)` pairs since `window_start`.
    window: VecDeque<(Action, ObservationSymbol)>,
    window_nodes: VecDeque<usize>,
    last_efe: EFEBreakdown,
}

/// Most likely states covering `mass`, renormalised.
pub fn planning_belief(q_s: &[f64], mass: f64, max_states: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..q_s.len()).collect();
    order.sort_by(|&a, &b| q_s[b].total_cmp(&q_s[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; q_s.len()];
    let mut acc = 0.0;
    for &i in order.iter().take(max_states.max(1)) {
        if q_s[i] <= 0.0 {
            break;
        }
        out[i] = q_s[i];
        acc += q_s[i];
        if acc >= mass {
            break;
        }
    }
    if acc > 0.0 {
        out.iter_mut().for_each(|x| *x /= acc);
    }
    out
}

impl AifAgent {
    /// A fresh agent with a one-node map at its starting pose.
    pub fn new(
        first: &SenseResult,
        num_symbols: usize,
        params: AgentParams,
        seed: u64,
    ) -> Result<Self> {
        params.inference.validate()?;
        params.planner.validate()?;
        let model =
            GenerativeModel::new(&first.obs, first.pose, params.agent.spacing, num_symbols)?
                .with_resolution(Some(1.0));
        let belief = Belief::point(1, 0, first.pose);
        let mut agent = Self {
            params,
            model,
            belief,
            kidnap: KidnapState::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            window: VecDeque::new(),
            window_nodes: VecDeque::new(),
            last_efe: EFEBreakdown::default(),
        };
        agent.model.set_confidence(1.0);
        agent.expand(0, first)?;
        Ok(agent)
    }

    /// Keep a learned model but start from a fresh point belief.
    pub fn with_model(
        model: GenerativeModel,
        belief: Belief,
        params: AgentParams,
        seed: u64,
    ) -> Self {
        Self {
            params,
            model,
            belief,
            kidnap: KidnapState::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            window: VecDeque::new(),
            window_nodes: VecDeque::new(),
            last_efe: EFEBreakdown::default(),
        }
    }

    pub fn model(&self) -> &GenerativeModel {
        &self.model
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn kidnap_state(&self) -> KidnapState {
        self.kidnap
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut AgentParams {
        &mut self.params
    }

    /// Breakdown of the policy chosen by the last [`act`](Self::act).
    pub fn last_efe(&self) -> EFEBreakdown {
        self.last_efe
    }

    /// Plan from the current belief and pick the next action.
    pub fn act(&mut self) -> Result<Action> {
        let q = planning_belief(
            &self.belief.q_s,
            self.params.agent.plan_mass,
            self.params.agent.plan_max_states,
        );
        let scored = plan(&self.model, &q, &self.params.planner)?;
        let i = select_policy(&scored, self.params.planner.temperature, &mut self.rng)?;
        self.last_efe = scored[i].efe;
        Ok(scored[i].policy.first())
    }

    /// Fold in the outcome of `action` and the new sensor reading.
    pub fn observe(
        &mut self,
        action: Action,
        step: &StepResult,
        sense: &SenseResult,
    ) -> Result<StepReport> {
        let cfg = self.params.inference.clone();
        let prev = self.belief.clone();
        let pc = if step.succeeded || action.is_stay() {
            0.0
        } else {
            1.0
        };
        let predicted = predict_pose(&prev, action, &self.model, |_| pc);
        // A reported collision means the state did not change.
        let moved_by = if pc > 0.0 { Action::Stay } else { action };
        let post = infer_joint(&sense.obs, &predicted, &prev.q_s, moved_by, &self.model)?;
        let s = surprise(&sense.obs, &post.prior, &self.model);
        let coherent = !post.zero_mass
            && transition_coherence(&sense.obs, &post.prior, &self.model)
                >= cfg.coherence_threshold;
        let confidence = post.belief.max_state_mass();
        let upd = update_kidnap_state(s, coherent, confidence, self.kidnap, &cfg);
        self.kidnap = upd.state;

        let lost = s > cfg.surprise_threshold && !coherent;
        if lost {
            self.belief = relocalization_belief(&sense.obs, &self.model);
            self.window.clear();
            self.window_nodes.clear();
        } else {
            self.belief = post.belief;
        }
        let node = self.belief.argmax_node();
        let mut grown = 0;

        if upd.permission {
            let from = prev.argmax_node();
            let q_product = (prev.q_s[from] * self.belief.q_s[node]).clamp(0.0, 1.0);
            self.model.set_confidence(self.belief.max_state_mass());
            if !action.is_stay() {
                let outcome = MotionOutcome {
                    intended: action,
                    succeeded: step.succeeded,
                    physically_attempted: true,
                    resulting_pose: step.pose,
                };
                let target = if step.succeeded {
                    Some(node)
                } else {
                    self.model.predicted_target(action, from)
                };
                if let Some(to) = target {
                    learn_transition(&mut self.model, from, to, &outcome, q_product)?;
                }
            }
            let confident = self.belief.max_state_mass() >= cfg.confidence_threshold;
            if confident || upd.learn_observation {
                learn_observation(
                    &mut self.model,
                    node,
                    &sense.obs,
                    cfg.obs_learning_rate,
                    true,
                )?;
            }
            self.window.push_back((action, sense.obs.clone()));
            self.window_nodes.push_back(from);
            while self.window.len() > self.params.agent.window {
                self.window.pop_front();
                self.window_nodes.pop_front();
            }
            if confident {
                predicted_transition_sweep(
                    &mut self.model,
                    node,
                    &sense.scan,
                    self.params.planner.sweep_depth,
                    self.belief.max_state_mass(),
                )?;
                grown = self.expand(node, sense)?;
            }
        }

        Ok(StepReport {
            node,
            believed_pose: self.belief.believed_pose(),
            surprise: s,
            kidnap_suspected: self.kidnap.suspected,
            newly_suspected: upd.newly_suspected,
            permission: upd.permission,
            grown,
        })
    }

    /// Propose, score and add imagined nodes around `node`.
    fn expand(&mut self, node: usize, sense: &SenseResult) -> Result<usize> {
        let cfg = self.params.structure.clone();
        let collision: [f64; HEADINGS] =
            std::array::from_fn(|h| if sense.scan.collision[h] { 1.0 } else { 0.0 });
        let proposals = propose_candidates(&self.model, node, &collision, &cfg)?;
        for link in &proposals.links {
            apply_link(&mut self.model, node, link, &cfg)?;
        }
        let window: Vec<(Action, ObservationSymbol)> = self.window.iter().cloned().collect();
        let start = self.window_nodes.front().copied().unwrap_or(node);
        let mut grown = 0;
        for c in &proposals.candidates {
            let gain = expansion_gain(c.collision_prob, &self.model);
            let accepted = if gain >= cfg.epistemic_bar {
                true
            } else {
                let expanded = match grow(&self.model, c, node, &cfg) {
                    Ok(m) => m,
                    Err(_) => continue,
                };
                accept_expansion(
                    delta_free_energy(&self.model, &expanded, start, &window)?,
                    gain,
                    &cfg,
                )
            };
            if accepted && grow_in_place(&mut self.model, c, node, &cfg).is_ok() {
                grown += 1;
            }
        }
        self.belief.resize(self.model.len());
        Ok(grown)
    }
}
