//! Joint filtering over discrete states and candidate poses, kidnap
//! detection, and observation-model learning.
//!
//! The state posterior at each step factorises as
//!
//! ```text
//! q_s(i) ∝ P(o | A_o,i) · w(i) · Σ_j B_s(a)[j→i] · q_s_prev(j)
//! ```
//!
//! where `w(i)` is the pose likelihood of anchor `i` averaged over the
//! dead-reckoned pose distribution. Pose candidates are then re-weighted by
//! how well they agree with the state posterior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::dirichlet::{self, normalize};
use crate::model::{pose_likelihood, Action, Belief, GenerativeModel, ObservationSymbol, Pose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Surprise above this many nats counts as surprising.
    pub surprise_threshold: f64,
    /// State mass needed before the model may learn at the argmax node.
    pub confidence_threshold: f64,
    /// Consecutive coherent steps needed to lift a kidnap suspicion.
    pub recovery_window: usize,
    pub obs_learning_rate: f64,
    /// Minimum coherence ratio for a transition to count as coherent.
    pub coherence_threshold: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            surprise_threshold: 2.0,
            confidence_threshold: 0.6,
            recovery_window: 3,
            obs_learning_rate: 1.0,
            coherence_threshold: 0.1,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.surprise_threshold > 0.0
            && self.confidence_threshold > 0.0
            && self.confidence_threshold <= 1.0
            && self.recovery_window >= 1
            && self.obs_learning_rate > 0.0
            && self.coherence_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid inference config: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KidnapState {
    pub suspected: bool,
    pub consistent_streak: usize,
}

/// Outcome of one kidnap-state transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KidnapUpdate {
    pub state: KidnapState,
    /// Whether the model may be updated this step.
    pub permission: bool,
    /// A surprising but coherent observation: relearn the observation model.
    pub learn_observation: bool,
    /// The suspicion was raised by this step.
    pub newly_suspected: bool,
}

/// Dead-reckon pose candidates through `action`. Each candidate splits into a
/// moved copy with mass `1 - P(c)` and a stationary copy with mass `P(c)`.
pub fn predict_pose(
    prev: &Belief,
    action: Action,
    model: &GenerativeModel,
    collision: impl Fn(&Pose) -> f64,
) -> Vec<(Pose, f64)> {
    let (dx, dy) = action.displacement(model.spacing(), model.resolution());
    let mut out: Vec<(Pose, f64)> = Vec::with_capacity(prev.q_p.len() * 2);
    let mut push = |p: Pose, w: f64| {
        if w <= 0.0 {
            return;
        }
        match out.iter_mut().find(|(q, _)| q.approx_eq(&p)) {
            Some(e) => e.1 += w,
            None => out.push((p, w)),
        }
    };
    for &(pose, w) in &prev.q_p {
        if action.is_stay() {
            push(pose, w);
            continue;
        }
        let pc = collision(&pose).clamp(0.0, 1.0);
        push(pose.translated(dx, dy), w * (1.0 - pc));
        push(pose, w * pc);
    }
    out
}

/// `Σ_j B_s(a)[j→i] · q(j)` for every node `i`.
pub fn prior_predictive(prev_q_s: &[f64], action: Action, model: &GenerativeModel) -> Vec<f64> {
    let mut prior = vec![0.0; model.len()];
    for (j, &qj) in prev_q_s.iter().enumerate() {
        if qj == 0.0 {
            continue;
        }
        for (i, p) in model.row_probs(action, j) {
            prior[i] += p * qj;
        }
    }
    prior
}

/// Per-node pose evidence `w(i) = Σ_k q̂_p(k) · pose_likelihood(pose_k)[i]`.
pub fn pose_evidence(predicted_pose: &[(Pose, f64)], model: &GenerativeModel) -> Vec<f64> {
    let mut w = vec![0.0; model.len()];
    for (pose, qk) in predicted_pose {
        if *qk == 0.0 {
            continue;
        }
        for (i, l) in pose_likelihood(model, pose).into_iter().enumerate() {
            w[i] += qk * l;
        }
    }
    w
}

/// Result of a joint update.
#[derive(Clone, Debug)]
pub struct JointPosterior {
    pub belief: Belief,
    /// Transition prior before the observation and pose evidence.
    pub prior: Vec<f64>,
    /// The joint mass vanished; `belief.q_s` is uniform and a kidnap should be
    /// suspected.
    pub zero_mass: bool,
}

/// One step of the approximate posterior over `(s_t, p_t)`.
pub fn infer_joint(
    obs: &ObservationSymbol,
    predicted_pose: &[(Pose, f64)],
    prev_q_s: &[f64],
    action: Action,
    model: &GenerativeModel,
) -> Result<JointPosterior> {
    let n = model.len();
    if prev_q_s.len() != n {
        return Err(Error::DimensionMismatch(prev_q_s.len(), n));
    }
    model.check_symbol(obs.id)?;
    let prior = prior_predictive(prev_q_s, action, model);
    let w = pose_evidence(predicted_pose, model);
    let mut q_s: Vec<f64> = (0..n)
        .map(|i| model.obs_prob(i, obs.id) * w[i] * prior[i])
        .collect();
    let total = normalize(&mut q_s);
    let zero_mass = !(total > 0.0 && total.is_finite());
    if zero_mass {
        q_s = vec![1.0 / n as f64; n];
    }
    let q_p = reweight_poses(predicted_pose, &q_s, model);
    Ok(JointPosterior {
        belief: Belief { q_s, q_p },
        prior,
        zero_mass,
    })
}

/// Weight pose candidates by agreement with the state posterior and keep at
/// most one candidate per node plus one.
fn reweight_poses(
    predicted: &[(Pose, f64)],
    q_s: &[f64],
    model: &GenerativeModel,
) -> Vec<(Pose, f64)> {
    let var = model.anchor_stddev().powi(2);
    let logs: Vec<f64> = predicted
        .iter()
        .map(|(pose, qk)| {
            let terms: Vec<f64> = q_s
                .iter()
                .enumerate()
                .filter(|(_, q)| **q > 0.0)
                .map(|(i, q)| q.ln() - model.anchor(i).distance(pose).powi(2) / (2.0 * var))
                .collect();
            qk.ln() + log_sum_exp(&terms)
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<(Pose, f64)> = if max.is_finite() {
        predicted
            .iter()
            .zip(&logs)
            .map(|((p, _), l)| (*p, (l - max).exp()))
            .collect()
    } else {
        predicted.to_vec()
    };
    cap_candidates(&mut out, model.len() + 1);
    out
}

fn cap_candidates(c: &mut Vec<(Pose, f64)>, cap: usize) {
    if c.len() > cap {
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|&a, &b| c[b].1.total_cmp(&c[a].1).then(a.cmp(&b)));
        idx.truncate(cap);
        idx.sort_unstable();
        *c = idx.into_iter().map(|i| c[i]).collect();
    }
    let total: f64 = c.iter().map(|e| e.1).sum();
    if total > 0.0 {
        for e in c.iter_mut() {
            e.1 /= total;
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `-ln Σ_i q_s(i) · P(obs | A_o,i)`, never negative.
pub fn surprise(obs: &ObservationSymbol, q_s: &[f64], model: &GenerativeModel) -> f64 {
    let p: f64 = q_s
        .iter()
        .enumerate()
        .map(|(i, q)| q * model.obs_prob(i, obs.id))
        .sum();
    if p <= 0.0 {
        return f64::INFINITY;
    }
    (-p.ln()).max(0.0)
}

/// How well the transition prior accounts for the observation compared with
/// a relocation to any node: `Σ_i prior(i)·P(o|i) / mean_i P(o|i)`.
pub fn transition_coherence(
    obs: &ObservationSymbol,
    prior: &[f64],
    model: &GenerativeModel,
) -> f64 {
    if prior.is_empty() {
        return 0.0;
    }
    let mut mean = 0.0;
    let mut expected = 0.0;
    for (i, q) in prior.iter().enumerate() {
        let l = model.obs_prob(i, obs.id);
        mean += l;
        expected += q * l;
    }
    mean /= prior.len() as f64;
    if mean <= 0.0 {
        0.0
    } else {
        expected / mean
    }
}

/// Advance the kidnap state machine.
pub fn update_kidnap_state(
    surprise: f64,
    transition_coherent: bool,
    confidence: f64,
    ks: KidnapState,
    cfg: &InferenceConfig,
) -> KidnapUpdate {
    let surprising = surprise > cfg.surprise_threshold;
    if surprising && !transition_coherent {
        return KidnapUpdate {
            state: KidnapState {
                suspected: true,
                consistent_streak: 0,
            },
            permission: false,
            learn_observation: false,
            newly_suspected: !ks.suspected,
        };
    }
    if ks.suspected {
        let streak = if transition_coherent {
            ks.consistent_streak + 1
        } else {
            ks.consistent_streak
        };
        if streak >= cfg.recovery_window && confidence >= cfg.confidence_threshold {
            return KidnapUpdate {
                state: KidnapState::default(),
                permission: true,
                learn_observation: false,
                newly_suspected: false,
            };
        }
        return KidnapUpdate {
            state: KidnapState {
                suspected: true,
                consistent_streak: streak,
            },
            permission: false,
            learn_observation: false,
            newly_suspected: false,
        };
    }
    KidnapUpdate {
        state: ks,
        permission: true,
        learn_observation: surprising,
        newly_suspected: false,
    }
}

/// Add `rate` to `A_o[node][obs]` and mark the node visited. Returns
/// `Ok(false)` without touching the model when permission is withheld.
pub fn learn_observation(
    model: &mut GenerativeModel,
    node: usize,
    obs: &ObservationSymbol,
    rate: f64,
    permission: bool,
) -> Result<bool> {
    model.check_node(node)?;
    model.check_symbol(obs.id)?;
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be > 0, got {rate}"
        )));
    }
    if !permission {
        return Ok(false);
    }
    model.add_obs_count(node, obs.id, rate);
    model.mark_visited(node);
    Ok(true)
}

/// Belief after a suspected kidnap: states weighted by the observation alone,
/// pose candidates at the anchors of the surviving states.
pub fn relocalization_belief(obs: &ObservationSymbol, model: &GenerativeModel) -> Belief {
    let n = model.len();
    let mut q_s: Vec<f64> = (0..n).map(|i| model.obs_prob(i, obs.id)).collect();
    let total = normalize(&mut q_s);
    if !(total > 0.0) {
        q_s = vec![1.0 / n as f64; n];
    }
    let mut q_p: Vec<(Pose, f64)> = q_s
        .iter()
        .enumerate()
        .filter(|(_, q)| **q > 0.0)
        .map(|(i, q)| (model.anchor(i), *q))
        .collect();
    cap_candidates(&mut q_p, n + 1);
    Belief { q_s, q_p }
}

/// Index of the state posterior's mode.
pub fn map_state(q_s: &[f64]) -> usize {
    dirichlet::argmax(q_s)
}
