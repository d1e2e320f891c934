//! Policy search by expected free energy, and transition learning.
//!
//! A policy is scored by rolling the state belief forward through `B_s`.
//! Each rollout particle carries the set of nodes it has already reached, so
//! the learning term only credits the first arrival at a node:
//!
//! ```text
//! G(π) = -learning - inference + collision - w · preference
//! ```
//!
//! - learning: expected entropy of `A_o` at newly reached nodes, plus the
//!   expected gain of growing the free neighbour slots of an unvisited node
//! - inference: `I(s_t; c_t)`, what a collision outcome would reveal about the state
//! - collision: `-ln(1 - P(c_t) + ε)` normalised so a free step costs 0
//! - preference: expected probability of the preferred symbol

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::dirichlet::{argmax, clamp_count, entropy, softmax_neg};
use crate::model::{Action, GenerativeModel, Pose, HEADINGS, MAX_NEIGHBOURS};
use crate::structure::{expansion_gain, COLLISION_EPS};

/// Count a newly discovered forward edge starts from before its first update.
pub const LINK_FORWARD_COUNT: f64 = 5.0;
/// Count a newly discovered reverse edge starts from.
pub const LINK_REVERSE_COUNT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub beam: usize,
    pub temperature: f64,
    /// Weight `w` on the preference term.
    pub utility_weight: f64,
    pub preferred_symbol: Option<u32>,
    /// Deepest edge the predicted-transition sweep walks.
    pub sweep_depth: usize,
    /// Rollout particles lighter than this are dropped.
    pub particle_floor: f64,
    pub max_particles: usize,
    /// Collision probability assumed for the unexplored surroundings of an
    /// unvisited node when crediting the expansions it may allow.
    pub frontier_collision_prior: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 14,
            beam: 13,
            temperature: 0.5,
            utility_weight: 0.0,
            preferred_symbol: None,
            sweep_depth: 8,
            particle_floor: 1e-6,
            max_particles: 64,
            frontier_collision_prior: 0.5,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.beam == 0 {
            return Err(Error::InvalidArgument(
                "horizon and beam must be positive".into(),
            ));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidArgument(
                "temperature must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.frontier_collision_prior) {
            return Err(Error::InvalidArgument(
                "frontier_collision_prior must be in [0, 1]".into(),
            ));
        }
        if !(self.utility_weight >= 0.0) {
            return Err(Error::InvalidArgument("utility_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy {
    pub actions: Vec<Action>,
}

impl Policy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn first(&self) -> Action {
        self.actions[0]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EFEBreakdown {
    pub learning_gain: f64,
    pub inference_gain: f64,
    pub collision_cost: f64,
    pub preference_value: f64,
    pub total: f64,
}

impl EFEBreakdown {
    fn finish(&mut self, utility_weight: f64) {
        self.total = -self.learning_gain - self.inference_gain + self.collision_cost
            - utility_weight * self.preference_value;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPolicy {
    pub policy: Policy,
    pub efe: EFEBreakdown,
}

/// What happened when an action was attempted, or what the sensors predict
/// would happen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionOutcome {
    pub intended: Action,
    pub succeeded: bool,
    /// `false` for outcomes inferred from range sensing.
    pub physically_attempted: bool,
    pub resulting_pose: Pose,
}

/// Range scan around the agent, one entry per heading.
#[derive(Clone, Debug, PartialEq)]
pub struct RayScan {
    /// A one-step move along the heading would be blocked.
    pub collision: [bool; HEADINGS],
    /// Free distance along the heading, capped at `range`.
    pub free_distance: [f64; HEADINGS],
    pub range: f64,
}

#[derive(Clone, Debug)]
struct Particle {
    node: usize,
    visited: Vec<usize>,
    w: f64,
}

#[derive(Clone, Debug)]
struct Rollout {
    particles: Vec<Particle>,
    terms: EFEBreakdown,
    last_collision: f64,
    mode: usize,
}

struct Scorer<'a> {
    model: &'a GenerativeModel,
    novelty: Vec<f64>,
    pref: Option<Vec<f64>>,
    utility_weight: f64,
    particle_floor: f64,
    max_particles: usize,
}

/// Neighbour slots an unvisited node still has for growth.
pub fn frontier_slots(model: &GenerativeModel, node: usize) -> usize {
    MAX_NEIGHBOURS.saturating_sub(model.neighbours(node).len())
}

/// Per-step collision cost, zero for a certainly free step.
fn collision_cost(p: f64) -> f64 {
    -((1.0 - p + COLLISION_EPS) / (1.0 + COLLISION_EPS)).ln()
}

fn conditional_entropy(m: &BTreeMap<usize, f64>) -> (f64, f64) {
    let mass: f64 = m.values().sum();
    if mass <= 0.0 {
        return (0.0, 0.0);
    }
    let p: Vec<f64> = m.values().map(|v| v / mass).collect();
    (mass, entropy(&p))
}

impl<'a> Scorer<'a> {
    fn new(model: &'a GenerativeModel, cfg: &PlannerConfig) -> Result<Self> {
        let per_slot = expansion_gain(cfg.frontier_collision_prior, model);
        let novelty = (0..model.len())
            .map(|i| {
                let h = entropy(&model.obs_likelihood(i));
                if model.is_visited(i) {
                    h
                } else {
                    h + frontier_slots(model, i) as f64 * per_slot
                }
            })
            .collect();
        let pref = match cfg.preferred_symbol {
            Some(s) => {
                model.check_symbol(s)?;
                Some((0..model.len()).map(|i| model.obs_prob(i, s)).collect())
            }
            None => None,
        };
        Ok(Self {
            model,
            novelty,
            pref,
            utility_weight: cfg.utility_weight,
            particle_floor: cfg.particle_floor,
            max_particles: cfg.max_particles.max(1),
        })
    }

    fn root(&self, q_s: &[f64]) -> Result<Rollout> {
        if q_s.len() != self.model.len() {
            return Err(Error::DimensionMismatch(q_s.len(), self.model.len()));
        }
        let total: f64 = q_s.iter().filter(|&&q| q > 0.0).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("belief has no mass".into()));
        }
        let particles = q_s
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > 0.0)
            .map(|(i, &q)| Particle {
                node: i,
                visited: vec![i],
                w: q / total,
            })
            .collect();
        Ok(Rollout {
            particles,
            terms: EFEBreakdown::default(),
            last_collision: 0.0,
            mode: argmax(q_s),
        })
    }

    fn step(&self, r: &Rollout, a: Action) -> Rollout {
        let mut next: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
        let mut marg: BTreeMap<usize, f64> = BTreeMap::new();
        let mut blocked: BTreeMap<usize, f64> = BTreeMap::new();
        let mut moved: BTreeMap<usize, f64> = BTreeMap::new();
        let mut learning = 0.0;
        for p in &r.particles {
            for (i, pr) in self.model.row_probs(a, p.node) {
                if pr == 0.0 {
                    continue;
                }
                let w = p.w * pr;
                let mut v = p.visited.clone();
                if let Err(pos) = v.binary_search(&i) {
                    learning += w * self.novelty[i];
                    v.insert(pos, i);
                }
                *next.entry((i, v)).or_insert(0.0) += w;
                *marg.entry(i).or_insert(0.0) += w;
                if !a.is_stay() && i == p.node {
                    *blocked.entry(i).or_insert(0.0) += w;
                } else {
                    *moved.entry(i).or_insert(0.0) += w;
                }
            }
        }
        let (_, h_marg) = conditional_entropy(&marg);
        let (pb, hb) = conditional_entropy(&blocked);
        let (pm, hm) = conditional_entropy(&moved);
        let p_collide = pb / (pb + pm);
        let inference = (h_marg - (pb * hb + pm * hm) / (pb + pm)).max(0.0);
        let preference = match &self.pref {
            Some(pref) => marg.iter().map(|(&i, &q)| q * pref[i]).sum(),
            None => 0.0,
        };

        let mut particles: Vec<Particle> = next
            .into_iter()
            .filter(|(_, w)| *w >= self.particle_floor)
            .map(|((node, visited), w)| Particle { node, visited, w })
            .collect();
        if particles.len() > self.max_particles {
            particles.sort_by(|a, b| b.w.total_cmp(&a.w));
            particles.truncate(self.max_particles);
        }
        let kept: f64 = particles.iter().map(|p| p.w).sum();
        for p in particles.iter_mut() {
            p.w /= kept;
        }

        let mut terms = r.terms;
        terms.learning_gain += learning;
        terms.inference_gain += inference;
        terms.collision_cost += collision_cost(p_collide);
        terms.preference_value += preference;
        terms.finish(self.utility_weight);
        let mode = marg
            .iter()
            .fold(
                (0usize, -1.0f64),
                |best, (&i, &q)| if q > best.1 { (i, q) } else { best },
            )
            .0;
        Rollout {
            particles,
            terms,
            last_collision: p_collide,
            mode,
        }
    }
}

/// Expected free energy of one policy from a state belief.
pub fn efe_policy(
    policy: &Policy,
    model: &GenerativeModel,
    q_s: &[f64],
    cfg: &PlannerConfig,
) -> Result<EFEBreakdown> {
    if policy.actions.is_empty() {
        return Err(Error::InvalidArgument("empty policy".into()));
    }
    let scorer = Scorer::new(model, cfg)?;
    let mut r = scorer.root(q_s)?;
    for &a in &policy.actions {
        r = scorer.step(&r, a);
    }
    Ok(r.terms)
}

/// Beam search over policies. All 13 single actions are always returned.
/// Deeper layers keep the `beam` best partial move sequences, where moves may
/// only follow supported transitions from the rollout's most likely node and
/// sequences that end in the same place having reached the same nodes are
/// merged. With a preference set, partial sequences are ranked as if they
/// could still walk to the nearest preferred node and wait there. Staying is terminal: a Stay child is scored through to the horizon
/// and returned without taking a beam slot.
pub fn plan(
    model: &GenerativeModel,
    q_s: &[f64],
    cfg: &PlannerConfig,
) -> Result<Vec<ScoredPolicy>> {
    cfg.validate()?;
    let scorer = Scorer::new(model, cfg)?;
    let root = scorer.root(q_s)?;
    let mut out = Vec::new();
    let stay_out = |out: &mut Vec<ScoredPolicy>, mut acts: Vec<Action>, mut r: Rollout| {
        while acts.len() < cfg.horizon {
            r = scorer.step(&r, Action::Stay);
            acts.push(Action::Stay);
        }
        out.push(ScoredPolicy {
            policy: Policy::new(acts),
            efe: r.terms,
        });
    };
    let bound = PreferenceBound::new(model, &scorer, cfg);
    let mut frontier: Vec<(Vec<Action>, Rollout)> = Vec::new();
    for a in Action::ALL {
        let r = scorer.step(&root, a);
        out.push(ScoredPolicy {
            policy: Policy::new(vec![a]),
            efe: r.terms,
        });
        if a.is_stay() {
            if cfg.horizon > 1 {
                stay_out(&mut out, vec![a], r);
            }
        } else {
            frontier.push((vec![a], r));
        }
    }
    for _ in 2..=cfg.horizon {
        frontier = select_beam(frontier, cfg.beam, &bound);
        let mut children = Vec::new();
        for (actions, r) in &frontier {
            if r.last_collision > 0.5 {
                continue;
            }
            let mut stay = actions.clone();
            stay.push(Action::Stay);
            stay_out(&mut out, stay, scorer.step(r, Action::Stay));
            for a in (0..HEADINGS).map(Action::heading) {
                if model.predicted_target(a, r.mode).is_some() {
                    let mut acts = actions.clone();
                    acts.push(a);
                    children.push((acts, scorer.step(r, a)));
                }
            }
        }
        if children.is_empty() {
            break;
        }
        frontier = select_beam(children, cfg.beam, &bound);
        for (acts, r) in &frontier {
            out.push(ScoredPolicy {
                policy: Policy::new(acts.clone()),
                efe: r.terms,
            });
        }
    }
    Ok(out)
}

/// Optimistic preference still collectable with `k` steps left: walk to the
/// nearest preferred node along supported moves and stay there.
struct PreferenceBound {
    horizon: usize,
    per_step: f64,
    hops: Vec<usize>,
}

impl PreferenceBound {
    fn new(model: &GenerativeModel, scorer: &Scorer, cfg: &PlannerConfig) -> Self {
        let mut b = Self {
            horizon: cfg.horizon,
            per_step: 0.0,
            hops: vec![usize::MAX; model.len()],
        };
        let Some(pref) = &scorer.pref else { return b };
        if cfg.utility_weight <= 0.0 {
            return b;
        }
        let mut into: Vec<Vec<usize>> = vec![Vec::new(); model.len()];
        for i in 0..model.len() {
            for a in (0..HEADINGS).map(Action::heading) {
                if let Some(j) = model.predicted_target(a, i) {
                    into[j].push(i);
                }
            }
        }
        let mut q = std::collections::VecDeque::new();
        for (i, &p) in pref.iter().enumerate() {
            if p >= 0.5 {
                b.hops[i] = 0;
                b.per_step = b.per_step.max(p);
                q.push_back(i);
            }
        }
        b.per_step *= cfg.utility_weight;
        while let Some(j) = q.pop_front() {
            for &i in &into[j] {
                if b.hops[i] == usize::MAX {
                    b.hops[i] = b.hops[j] + 1;
                    q.push_back(i);
                }
            }
        }
        b
    }

    fn rank(&self, depth: usize, r: &Rollout) -> f64 {
        let left = self.horizon.saturating_sub(depth);
        let d = self.hops[r.mode];
        if d >= left {
            r.terms.total
        } else {
            r.terms.total - self.per_step * (left - d) as f64
        }
    }
}

/// Best `beam` entries, one per distinct dominant rollout state.
fn select_beam(
    items: Vec<(Vec<Action>, Rollout)>,
    beam: usize,
    bound: &PreferenceBound,
) -> Vec<(Vec<Action>, Rollout)> {
    let mut items: Vec<(f64, Vec<Action>, Rollout)> = items
        .into_iter()
        .map(|(a, r)| (bound.rank(a.len(), &r), a, r))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(beam);
    for (_, acts, r) in items {
        let key = r
            .particles
            .iter()
            .fold(None::<&Particle>, |best, p| match best {
                Some(b) if b.w >= p.w => Some(b),
                _ => Some(p),
            })
            .map(|p| (p.node, p.visited.clone()));
        if seen.insert(key) {
            out.push((acts, r));
            if out.len() == beam {
                break;
            }
        }
    }
    out
}

pub fn enumerate_policies(
    model: &GenerativeModel,
    q_s: &[f64],
    cfg: &PlannerConfig,
) -> Result<Vec<Policy>> {
    Ok(plan(model, q_s, cfg)?
        .into_iter()
        .map(|s| s.policy)
        .collect())
}

/// `softmax(-G / T)`. At zero temperature all mass goes to the first minimum.
pub fn policy_distribution(totals: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if totals.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if temperature <= 1e-12 {
        let mut best = 0;
        for (i, &g) in totals.iter().enumerate() {
            if g < totals[best] {
                best = i;
            }
        }
        let mut p = vec![0.0; totals.len()];
        p[best] = 1.0;
        return Ok(p);
    }
    Ok(softmax_neg(totals, temperature))
}

/// Sample a policy index from [`policy_distribution`].
pub fn select_policy<R: Rng + ?Sized>(
    scored: &[ScoredPolicy],
    temperature: f64,
    rng: &mut R,
) -> Result<usize> {
    let totals: Vec<f64> = scored.iter().map(|s| s.efe.total).collect();
    let p = policy_distribution(&totals, temperature)?;
    if temperature <= 1e-12 {
        return Ok(argmax(&p));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(p.iter().rposition(|&x| x > 0.0).unwrap_or(0))
}

/// Learning rate for an outcome. Physically attempted outcomes are trusted
/// more than sensor predictions, and forward edges more than reverse ones.
pub fn learning_rate(physically_attempted: bool, possible: bool, reverse: bool) -> f64 {
    let magnitude = match (physically_attempted, reverse) {
        (true, false) => 7.0,
        (true, true) | (false, false) => 5.0,
        (false, true) => 3.0,
    };
    if possible {
        magnitude
    } else {
        -magnitude
    }
}

/// `B + Q · B · λ`, clamped.
pub fn transition_update(b: f64, q_product: f64, lambda: f64) -> f64 {
    clamp_count(b + q_product * b * lambda)
}

/// Before/after counts of the entries an update touched.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransitionUpdate {
    pub forward: Option<(f64, f64)>,
    pub reverse: Option<(f64, f64)>,
}

fn update_entry(
    model: &mut GenerativeModel,
    a: Action,
    from: usize,
    to: usize,
    lambda: f64,
    q_product: f64,
    init: f64,
) -> Option<(f64, f64)> {
    let possible = lambda > 0.0;
    let before = match model.stored_count(a, from, to) {
        Some(c) => c,
        None if possible => {
            if !model.set_count(a, from, to, init) {
                return None;
            }
            clamp_count(init)
        }
        None => return None,
    };
    let after = transition_update(before, q_product, lambda);
    model.set_count(a, from, to, after);
    if !possible && before > after {
        let s = model.self_count(a, from);
        model.set_count(a, from, from, s + (before - after));
    }
    Some((before, after))
}

/// Update the `from → to` edge under the outcome's action and the reverse
/// edge under the opposite action. Impossible outcomes move the removed mass
/// onto the blocked (self) entry.
pub fn learn_transition(
    model: &mut GenerativeModel,
    from: usize,
    to: usize,
    outcome: &MotionOutcome,
    q_product: f64,
) -> Result<TransitionUpdate> {
    model.check_node(from)?;
    model.check_node(to)?;
    if !(0.0..=1.0).contains(&q_product) {
        return Err(Error::InvalidArgument(format!(
            "q_product {q_product} outside [0, 1]"
        )));
    }
    let a = outcome.intended;
    if a.is_stay() || from == to {
        return Ok(TransitionUpdate::default());
    }
    let fwd = learning_rate(outcome.physically_attempted, outcome.succeeded, false);
    let rev = learning_rate(outcome.physically_attempted, outcome.succeeded, true);
    Ok(TransitionUpdate {
        forward: update_entry(model, a, from, to, fwd, q_product, LINK_FORWARD_COUNT),
        reverse: update_entry(
            model,
            a.opposite(),
            to,
            from,
            rev,
            q_product,
            LINK_REVERSE_COUNT,
        ),
    })
}

/// One edge judged by the sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweptEdge {
    pub action: Action,
    pub from: usize,
    pub to: usize,
    pub possible: bool,
}

/// Walk the chain of predicted targets along every heading from `node` and
/// confirm or weaken each edge against the range scan. Depth one uses the
/// collision flag; deeper edges compare the anchor's distance along the
/// heading with the free range. The walk stops at the first blocked edge,
/// beyond sensor range, or when the chain drifts sideways by more than half
/// a spacing.
pub fn predicted_transition_sweep(
    model: &mut GenerativeModel,
    node: usize,
    scan: &RayScan,
    max_depth: usize,
    q_product: f64,
) -> Result<Vec<SweptEdge>> {
    model.check_node(node)?;
    let origin = model.anchor(node);
    let half = model.spacing() / 2.0 + 1e-9;
    let mut out = Vec::new();
    for h in 0..HEADINGS {
        let a = Action::heading(h);
        let (ux, uy) = a.unit();
        let mut chain = vec![node];
        let mut cur = node;
        for depth in 1..=max_depth {
            let Some(next) = model.predicted_target(a, cur) else {
                break;
            };
            if chain.contains(&next) {
                break;
            }
            let p = model.anchor(next);
            let (dx, dy) = (p.x - origin.x, p.y - origin.y);
            let along = dx * ux + dy * uy;
            let lateral = (dx * uy - dy * ux).abs();
            if along <= 0.0 || lateral > half {
                break;
            }
            let possible = if depth == 1 {
                !scan.collision[h]
            } else {
                if along > scan.range + 1e-9 {
                    break;
                }
                along <= scan.free_distance[h] + 1e-9
            };
            let outcome = MotionOutcome {
                intended: a,
                succeeded: possible,
                physically_attempted: false,
                resulting_pose: if possible { p } else { model.anchor(cur) },
            };
            learn_transition(model, cur, next, &outcome, q_product)?;
            out.push(SweptEdge {
                action: a,
                from: cur,
                to: next,
                possible,
            });
            if !possible {
                break;
            }
            chain.push(next);
            cur = next;
        }
    }
    Ok(out)
}
