//! Model growth: where to imagine new states, whether an expanded model is
//! worth keeping, and the growth transaction itself.
//!
//! A candidate pose one spacing away along a heading is scored by the
//! expected free energy of adding it to the pose likelihood:
//!
//! ```text
//! G = -(1 - P(c)) · H[uniform A_o column] - ln(1 - P(c) + ε)
//! ```
//!
//! The would-be column starts uniform and is expected to collapse onto a
//! single symbol after one visit, so the information gain is its entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::prior_predictive;
use crate::model::dirichlet::{entropy, expected_likelihood, softmax_neg};
use crate::model::{
    Action, GenerativeModel, ObservationSymbol, Pose, FLOOR, HEADINGS, MAX_NEIGHBOURS,
};

/// Guards `ln(1 - P(c))` at certain collision.
pub const COLLISION_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    /// Minimum expected information gain (nats) that admits an imagined node
    /// without evidence from the observation window.
    pub epistemic_bar: f64,
    /// Initial count of the source→new edge at zero collision probability.
    pub forward_edge_count: f64,
    /// Initial count of the new→source edge at zero collision probability.
    pub reverse_edge_count: f64,
    /// Proposals landing within this fraction of a spacing of an existing
    /// anchor become edge links.
    pub link_radius: f64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            epistemic_bar: 0.5,
            forward_edge_count: 5.0,
            reverse_edge_count: 3.0,
            link_radius: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionCandidate {
    pub pose: Pose,
    pub heading: Action,
    pub collision_prob: f64,
    /// Expected free energy of adding the pose.
    pub efe: f64,
    /// `softmax(-G)` over the retained batch.
    pub prior: f64,
}

/// A heading that lands on an existing anchor: link instead of growing.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeLink {
    pub heading: Action,
    pub target: usize,
    pub collision_prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Proposals {
    pub candidates: Vec<ExpansionCandidate>,
    pub links: Vec<EdgeLink>,
}

/// Entropy of a fresh, uniform observation column.
fn uniform_column_entropy(model: &GenerativeModel) -> f64 {
    let col = expected_likelihood(&vec![FLOOR; model.num_symbols()]).expect("non-empty alphabet");
    entropy(&col)
}

/// Expected information gain of imagining a node behind a heading with the
/// given collision probability.
pub fn expansion_gain(collision_prob: f64, model: &GenerativeModel) -> f64 {
    (1.0 - collision_prob.clamp(0.0, 1.0)) * uniform_column_entropy(model)
}

/// `G(A_p)` for a candidate.
pub fn efe_expansion(collision_prob: f64, model: &GenerativeModel) -> f64 {
    let pc = collision_prob.clamp(0.0, 1.0);
    -expansion_gain(pc, model) - (1.0 - pc + COLLISION_EPS).ln()
}

/// `P(A_p) = σ(-G)` over a batch.
pub fn expansion_prior(efes: &[f64]) -> Result<Vec<f64>> {
    if efes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(softmax_neg(efes, 1.0))
}

/// Score every heading around `node` and keep at most six proposals,
/// lowest G first, ties to the lowest heading index.
pub fn propose_candidates(
    model: &GenerativeModel,
    node: usize,
    collision: &[f64; HEADINGS],
    cfg: &StructureConfig,
) -> Result<Proposals> {
    model.check_node(node)?;
    let origin = model.anchor(node);
    let spacing = model.spacing();
    let min_sep = spacing * (1.0 - 1e-9);

    enum Kind {
        Node(Pose),
        Link(usize),
    }
    let mut scored: Vec<(f64, usize, Kind)> = Vec::new();
    for h in 0..HEADINGS {
        let a = Action::heading(h);
        let pc = collision[h].clamp(0.0, 1.0);
        let g = efe_expansion(pc, model);
        if g >= 0.0 {
            continue;
        }
        let (dx, dy) = a.displacement(spacing, model.resolution());
        let target = origin.translated(dx, dy);
        let nearest = model.nearest_node(&target);
        let d = model.anchor(nearest).distance(&target);
        if d <= cfg.link_radius * spacing {
            if nearest != node {
                scored.push((g, h, Kind::Link(nearest)));
            }
        } else if d >= min_sep {
            scored.push((g, h, Kind::Node(target)));
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut neighbours = model.neighbours(node);
    let mut out = Proposals::default();
    let mut chosen: Vec<Pose> = Vec::new();
    for (g, h, kind) in scored {
        let heading = Action::heading(h);
        match kind {
            Kind::Link(target) => {
                if model.stored_count(heading, node, target).is_some() {
                    continue;
                }
                if neighbours.contains(&target) || neighbours.len() < MAX_NEIGHBOURS {
                    neighbours.insert(target);
                    out.links.push(EdgeLink {
                        heading,
                        target,
                        collision_prob: collision[h],
                    });
                }
            }
            Kind::Node(pose) => {
                if neighbours.len() + chosen.len() >= MAX_NEIGHBOURS {
                    continue;
                }
                if chosen.iter().any(|c| c.distance(&pose) < min_sep) {
                    continue;
                }
                chosen.push(pose);
                out.candidates.push(ExpansionCandidate {
                    pose,
                    heading,
                    collision_prob: collision[h],
                    efe: g,
                    prior: 0.0,
                });
            }
        }
    }
    if !out.candidates.is_empty() {
        let efes: Vec<f64> = out.candidates.iter().map(|c| c.efe).collect();
        for (c, p) in out.candidates.iter_mut().zip(expansion_prior(&efes)?) {
            c.prior = p;
        }
    }
    Ok(out)
}

/// Negative log evidence of an `(action, observation)` window, filtering from
/// a point belief at `start` with observation likelihoods only.
pub fn window_nll(
    model: &GenerativeModel,
    start: usize,
    window: &[(Action, ObservationSymbol)],
) -> Result<f64> {
    model.check_node(start)?;
    let mut q = vec![0.0; model.len()];
    q[start] = 1.0;
    let mut nll = 0.0;
    for (a, o) in window {
        model.check_symbol(o.id)?;
        let prior = prior_predictive(&q, *a, model);
        let mut evidence = 0.0;
        for (i, p) in prior.iter().enumerate() {
            q[i] = p * model.obs_prob(i, o.id);
            evidence += q[i];
        }
        if evidence <= 0.0 {
            return Ok(f64::INFINITY);
        }
        for x in q.iter_mut() {
            *x /= evidence;
        }
        nll -= evidence.ln();
    }
    Ok(nll)
}

/// `ΔF = F[expanded] - F[model]` over a recent window.
pub fn delta_free_energy(
    model: &GenerativeModel,
    expanded: &GenerativeModel,
    start: usize,
    window: &[(Action, ObservationSymbol)],
) -> Result<f64> {
    if expanded.len() < model.len() || expanded.num_symbols() != model.num_symbols() {
        return Err(Error::DimensionMismatch(expanded.len(), model.len()));
    }
    Ok(window_nll(expanded, start, window)? - window_nll(model, start, window)?)
}

/// Growth is accepted when it lowers free energy or promises enough
/// information gain on its own.
pub fn accept_expansion(delta_f: f64, gain: f64, cfg: &StructureConfig) -> bool {
    delta_f < 0.0 || gain >= cfg.epistemic_bar
}

/// Append the candidate as a new node linked from `source`. Returns its id.
pub fn grow_in_place(
    model: &mut GenerativeModel,
    candidate: &ExpansionCandidate,
    source: usize,
    cfg: &StructureConfig,
) -> Result<usize> {
    model.check_node(source)?;
    let min_sep = model.spacing() * (1.0 - 1e-9);
    for i in 0..model.len() {
        if model.anchor(i).distance(&candidate.pose) < min_sep {
            return Err(Error::SpacingViolation {
                x: candidate.pose.x,
                y: candidate.pose.y,
                spacing: model.spacing(),
                node: i,
            });
        }
    }
    if model.neighbours(source).len() >= MAX_NEIGHBOURS {
        return Err(Error::NeighbourCap(source));
    }
    if candidate.heading.is_stay() {
        return Err(Error::InvalidArgument("cannot grow along Stay".into()));
    }
    let scale = 1.0 - candidate.collision_prob.clamp(0.0, 1.0);
    let id = model.push_node(candidate.pose, false);
    model.set_count(
        candidate.heading,
        source,
        id,
        cfg.forward_edge_count * scale,
    );
    model.set_count(
        candidate.heading.opposite(),
        id,
        source,
        cfg.reverse_edge_count * scale,
    );
    Ok(id)
}

/// Value-returning form of [`grow_in_place`].
pub fn grow(
    model: &GenerativeModel,
    candidate: &ExpansionCandidate,
    source: usize,
    cfg: &StructureConfig,
) -> Result<GenerativeModel> {
    let mut m = model.clone();
    grow_in_place(&mut m, candidate, source, cfg)?;
    Ok(m)
}

/// Add a proposed link (and its reverse when the target has room).
/// Returns whether the forward edge was created.
pub fn apply_link(
    model: &mut GenerativeModel,
    from: usize,
    link: &EdgeLink,
    cfg: &StructureConfig,
) -> Result<bool> {
    model.check_node(from)?;
    model.check_node(link.target)?;
    if model
        .stored_count(link.heading, from, link.target)
        .is_some()
    {
        return Ok(false);
    }
    let scale = 1.0 - link.collision_prob.clamp(0.0, 1.0);
    if !model.set_count(
        link.heading,
        from,
        link.target,
        cfg.forward_edge_count * scale,
    ) {
        return Ok(false);
    }
    let rev = link.heading.opposite();
    if model.stored_count(rev, link.target, from).is_none() {
        model.set_count(rev, link.target, from, cfg.reverse_edge_count * scale);
    }
    Ok(true)
}
