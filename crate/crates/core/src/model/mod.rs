//! The agent's generative model: topological nodes, their observation and
//! pose likelihoods, and action-conditioned transition counts.
//!
//! Transitions are stored sparsely. Every `(action, from)` row implicitly
//! holds a self entry at [`FLOOR`] unless one has been written explicitly;
//! for a moving action the self entry is the "blocked" outcome. The Stay row
//! always carries an explicit self-loop.

pub mod dirichlet;
pub mod export;

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use dirichlet::{expected_likelihood, CEILING, FLOOR};

/// Maximum number of distinct adjacent states a node may link to.
pub const MAX_NEIGHBOURS: usize = 6;

/// Number of evenly spaced headings.
pub const HEADINGS: usize = 12;

/// Headings plus Stay.
pub const NUM_ACTIONS: usize = HEADINGS + 1;

/// Tolerance used for pose equality.
pub const POSE_EPS: f64 = 1e-9;

/// A planar position in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn approx_eq(&self, other: &Pose) -> bool {
        (self.x - other.x).abs() <= POSE_EPS && (self.y - other.y).abs() <= POSE_EPS
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose {
        Pose::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// One of twelve headings at 30 degree increments (0 = +x, 3 = +y), or Stay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Heading(u8),
    Stay,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Heading(0),
        Action::Heading(1),
        Action::Heading(2),
        Action::Heading(3),
        Action::Heading(4),
        Action::Heading(5),
        Action::Heading(6),
        Action::Heading(7),
        Action::Heading(8),
        Action::Heading(9),
        Action::Heading(10),
        Action::Heading(11),
        Action::Stay,
    ];

    /// Index into [`Action::ALL`]; Stay is last.
    pub fn index(self) -> usize {
        match self {
            Action::Heading(h) => h as usize,
            Action::Stay => HEADINGS,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn heading(h: usize) -> Action {
        assert!(h < HEADINGS, "heading index out of range");
        Action::Heading(h as u8)
    }

    pub fn is_stay(self) -> bool {
        matches!(self, Action::Stay)
    }

    pub fn degrees(self) -> Option<f64> {
        match self {
            Action::Heading(h) => Some(h as f64 * 30.0),
            Action::Stay => None,
        }
    }

    /// The geometrically opposite action. Stay is its own opposite.
    pub fn opposite(self) -> Action {
        match self {
            Action::Heading(h) => Action::Heading(((h as usize + HEADINGS / 2) % HEADINGS) as u8),
            Action::Stay => Action::Stay,
        }
    }

    /// Unit direction vector; zero for Stay.
    pub fn unit(self) -> (f64, f64) {
        match self.degrees() {
            Some(d) => {
                let r = d.to_radians();
                (r.cos(), r.sin())
            }
            None => (0.0, 0.0),
        }
    }

    /// Displacement for one step of `step` metres, optionally snapped to a
    /// lattice of the given resolution.
    pub fn displacement(self, step: f64, resolution: Option<f64>) -> (f64, f64) {
        let (ux, uy) = self.unit();
        let (dx, dy) = (ux * step, uy * step);
        match resolution {
            Some(r) => (quantize(dx, r), quantize(dy, r)),
            None => (dx, dy),
        }
    }

    pub fn label(self) -> String {
        match self {
            Action::Heading(h) => format!("h{:03}", h as u32 * 30),
            Action::Stay => "stay".to_string(),
        }
    }

    pub fn parse_label(s: &str) -> Option<Action> {
        if s == "stay" {
            return Some(Action::Stay);
        }
        let deg: u32 = s.strip_prefix('h')?.parse().ok()?;
        if !deg.is_multiple_of(30) || deg >= 360 {
            return None;
        }
        Some(Action::Heading((deg / 30) as u8))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Round to the nearest multiple of `res`, halves away from zero. Values are
/// first snapped to 1e-6 so trigonometric noise cannot flip a tie.
pub fn quantize(v: f64, res: f64) -> f64 {
    let q = ((v / res) * 1e6).round() / 1e6;
    q.round() * res
}

/// A perceptual class, optionally carrying a feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSymbol {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl ObservationSymbol {
    pub fn new(id: u32) -> Self {
        Self { id, features: None }
    }

    pub fn with_features(id: u32, features: Vec<f64>) -> Self {
        Self {
            id,
            features: Some(features),
        }
    }
}

impl From<u32> for ObservationSymbol {
    fn from(id: u32) -> Self {
        ObservationSymbol::new(id)
    }
}

/// Similarity in `[0, 1]`: `exp(-||a - b|| / scale)` when both symbols carry
/// features, otherwise a Kronecker delta on the ids.
pub fn obs_similarity(a: &ObservationSymbol, b: &ObservationSymbol, scale: f64) -> Result<f64> {
    match (&a.features, &b.features) {
        (Some(fa), Some(fb)) => {
            if fa.len() != fb.len() {
                return Err(Error::DimensionMismatch(fa.len(), fb.len()));
            }
            let d2: f64 = fa.iter().zip(fb).map(|(x, y)| (x - y).powi(2)).sum();
            if d2.sqrt() <= 1e-12 {
                return Ok(1.0);
            }
            Ok((-d2.sqrt() / scale).exp())
        }
        (None, None) => Ok(if a.id == b.id { 1.0 } else { 0.0 }),
        (Some(fa), None) => Err(Error::DimensionMismatch(fa.len(), 0)),
        (None, Some(fb)) => Err(Error::DimensionMismatch(0, fb.len())),
    }
}

/// Binary collision variable: 1 iff an obstacle is expected between two poses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CollisionFlag(pub bool);

impl CollisionFlag {
    pub fn value(self) -> u8 {
        self.0 as u8
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    /// Set once the agent has observed the node in person.
    pub visited: bool,
}

/// Sparse transition row: `(target, count)` sorted by target.
pub type Row = Vec<(usize, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeModel {
    spacing: f64,
    resolution: Option<f64>,
    num_symbols: usize,
    nodes: Vec<NodeRecord>,
    obs_counts: Vec<Vec<f64>>,
    imagined: Vec<Pose>,
    transitions: Vec<Vec<Row>>,
    confidence: f64,
}

impl GenerativeModel {
    /// Bootstrap a one-node model anchored at `initial_pose`.
    pub fn new(
        initial_obs: &ObservationSymbol,
        initial_pose: Pose,
        spacing: f64,
        num_symbols: usize,
    ) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be > 0, got {spacing}"
            )));
        }
        if initial_obs.id as usize >= num_symbols {
            return Err(Error::UnknownSymbol(initial_obs.id, num_symbols));
        }
        let mut counts = vec![FLOOR; num_symbols];
        counts[initial_obs.id as usize] += 1.0;
        let mut transitions = vec![vec![Vec::new()]; NUM_ACTIONS];
        transitions[Action::Stay.index()][0] = vec![(0, 1.0)];
        Ok(Self {
            spacing,
            resolution: None,
            num_symbols,
            nodes: vec![NodeRecord {
                id: 0,
                visited: true,
            }],
            obs_counts: vec![counts],
            imagined: vec![initial_pose],
            transitions,
            confidence: 1.0,
        })
    }

    /// Snap action displacements to a lattice (the simulator's cell size).
    pub fn with_resolution(mut self, resolution: Option<f64>) -> Self {
        self.resolution = resolution;
        self
    }

    /// An empty shell used by import paths; callers must add at least one node.
    pub(crate) fn empty(spacing: f64, resolution: Option<f64>, num_symbols: usize) -> Self {
        Self {
            spacing,
            resolution,
            num_symbols,
            nodes: Vec::new(),
            obs_counts: Vec::new(),
            imagined: Vec::new(),
            transitions: vec![Vec::new(); NUM_ACTIONS],
            confidence: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn resolution(&self) -> Option<f64> {
        self.resolution
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn is_visited(&self, node: usize) -> bool {
        self.nodes[node].visited
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn set_confidence(&mut self, c: f64) {
        self.confidence = c.clamp(0.0, 1.0);
    }

    /// Mean of node `i`'s pose region.
    pub fn anchor(&self, node: usize) -> Pose {
        self.imagined[node]
    }

    /// Isotropic standard deviation of every pose region.
    pub fn anchor_stddev(&self) -> f64 {
        self.spacing / 2.0
    }

    /// The imagined-position list, one entry per node.
    pub fn imagined_poses(&self) -> &[Pose] {
        &self.imagined
    }

    pub fn obs_counts(&self, node: usize) -> &[f64] {
        &self.obs_counts[node]
    }

    pub fn obs_likelihood(&self, node: usize) -> Vec<f64> {
        expected_likelihood(&self.obs_counts[node]).expect("non-empty alphabet")
    }

    /// `P(symbol | node)` under the expected observation likelihood.
    pub fn obs_prob(&self, node: usize, symbol: u32) -> f64 {
        let row = &self.obs_counts[node];
        match row.get(symbol as usize) {
            Some(c) => c / row.iter().sum::<f64>(),
            None => 0.0,
        }
    }

    /// Mode of the node's observation likelihood (lowest id on ties).
    pub fn obs_mode(&self, node: usize) -> u32 {
        dirichlet::argmax(&self.obs_counts[node]) as u32
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(node))
        }
    }

    pub fn check_symbol(&self, symbol: u32) -> Result<()> {
        if (symbol as usize) < self.num_symbols {
            Ok(())
        } else {
            Err(Error::UnknownSymbol(symbol, self.num_symbols))
        }
    }

    /// Stored entries of the `(action, from)` row.
    pub fn row(&self, action: Action, from: usize) -> &[(usize, f64)] {
        &self.transitions[action.index()][from]
    }

    /// Self count of a row, implicit [`FLOOR`] when not stored.
    pub fn self_count(&self, action: Action, from: usize) -> f64 {
        self.stored_count(action, from, from).unwrap_or(FLOOR)
    }

    pub fn stored_count(&self, action: Action, from: usize, to: usize) -> Option<f64> {
        let row = self.row(action, from);
        row.binary_search_by_key(&to, |e| e.0)
            .ok()
            .map(|i| row[i].1)
    }

    /// Count of an entry including the implicit self floor; `None` for
    /// targets outside the row's support.
    pub fn count(&self, action: Action, from: usize, to: usize) -> Option<f64> {
        match self.stored_count(action, from, to) {
            Some(c) => Some(c),
            None if to == from => Some(FLOOR),
            None => None,
        }
    }

    fn row_total(&self, action: Action, from: usize) -> f64 {
        let row = self.row(action, from);
        let stored: f64 = row.iter().map(|e| e.1).sum();
        if row.iter().any(|e| e.0 == from) {
            stored
        } else {
            stored + FLOOR
        }
    }

    /// Normalised `P(to | from, action)`.
    pub fn transition_prob(&self, action: Action, from: usize, to: usize) -> f64 {
        match self.count(action, from, to) {
            Some(c) => c / self.row_total(action, from),
            None => 0.0,
        }
    }

    /// Full normalised row including the self entry, sorted by target.
    pub fn row_probs(&self, action: Action, from: usize) -> Vec<(usize, f64)> {
        let total = self.row_total(action, from);
        let mut out: Vec<(usize, f64)> = self
            .row(action, from)
            .iter()
            .map(|&(t, c)| (t, c / total))
            .collect();
        if !out.iter().any(|e| e.0 == from) {
            let pos = out.partition_point(|e| e.0 < from);
            out.insert(pos, (from, FLOOR / total));
        }
        out
    }

    /// Probability the action leaves the agent where it is. Zero for Stay.
    pub fn blocked_prob(&self, action: Action, from: usize) -> f64 {
        if action.is_stay() {
            0.0
        } else {
            self.transition_prob(action, from, from)
        }
    }

    /// Strongest non-self target of a row (lowest id on ties).
    pub fn predicted_target(&self, action: Action, from: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &(t, c) in self.row(action, from) {
            if t == from {
                continue;
            }
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((t, c));
            }
        }
        best.map(|b| b.0)
    }

    /// Distinct non-self targets across all actions.
    pub fn neighbours(&self, from: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for a in Action::ALL {
            for &(t, _) in self.row(a, from) {
                if t != from {
                    out.insert(t);
                }
            }
        }
        out
    }

    /// Whether a `from -> to` link may be added without breaking the cap.
    pub fn can_link(&self, from: usize, to: usize) -> bool {
        let n = self.neighbours(from);
        n.contains(&to) || n.len() < MAX_NEIGHBOURS
    }

    /// Write a count, clamped. Creating a new non-self entry is refused when
    /// it would exceed the neighbour cap.
    pub(crate) fn set_count(&mut self, action: Action, from: usize, to: usize, count: f64) -> bool {
        if to != from && self.stored_count(action, from, to).is_none() && !self.can_link(from, to) {
            return false;
        }
        let c = dirichlet::clamp_count(count);
        let row = &mut self.transitions[action.index()][from];
        match row.binary_search_by_key(&to, |e| e.0) {
            Ok(i) => row[i].1 = c,
            Err(i) => row.insert(i, (to, c)),
        }
        true
    }

    pub(crate) fn add_obs_count(&mut self, node: usize, symbol: u32, delta: f64) {
        let c = &mut self.obs_counts[node][symbol as usize];
        *c = dirichlet::clamp_count(*c + delta);
    }

    pub(crate) fn set_obs_counts(&mut self, node: usize, counts: Vec<f64>) {
        self.obs_counts[node] = counts.into_iter().map(dirichlet::clamp_count).collect();
    }

    pub(crate) fn mark_visited(&mut self, node: usize) {
        self.nodes[node].visited = true;
    }

    /// Append a node with a uniform observation column and a Stay self-loop.
    pub(crate) fn push_node(&mut self, pose: Pose, visited: bool) -> usize {
        let id = self.nodes.len();
        self.nodes.push(NodeRecord { id, visited });
        self.obs_counts.push(vec![FLOOR; self.num_symbols]);
        self.imagined.push(pose);
        for (ai, rows) in self.transitions.iter_mut().enumerate() {
            if ai == Action::Stay.index() {
                rows.push(vec![(id, 1.0)]);
            } else {
                rows.push(Vec::new());
            }
        }
        id
    }

    /// Nearest anchor to a pose (lowest id on ties).
    pub fn nearest_node(&self, pose: &Pose) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, a) in self.imagined.iter().enumerate() {
            let d = a.distance(pose);
            if d < bd - 1e-12 {
                bd = d;
                best = i;
            }
        }
        best
    }

    /// Stable hash of every parameter, used to prove immutability.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.spacing.to_bits().hash(&mut h);
        self.num_symbols.hash(&mut h);
        for n in &self.nodes {
            n.id.hash(&mut h);
            n.visited.hash(&mut h);
        }
        for row in &self.obs_counts {
            for c in row {
                c.to_bits().hash(&mut h);
            }
        }
        for p in &self.imagined {
            p.x.to_bits().hash(&mut h);
            p.y.to_bits().hash(&mut h);
        }
        for rows in &self.transitions {
            for row in rows {
                row.len().hash(&mut h);
                for (t, c) in row {
                    t.hash(&mut h);
                    c.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Verify every structural invariant; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.len();
        if n == 0 {
            return Err("model has no nodes".into());
        }
        if self.imagined.len() != n || self.obs_counts.len() != n {
            return Err(format!(
                "dimension mismatch: nodes {n}, poses {}, A_o {}",
                self.imagined.len(),
                self.obs_counts.len()
            ));
        }
        for (i, row) in self.obs_counts.iter().enumerate() {
            if row.len() != self.num_symbols {
                return Err(format!("A_o row {i} has {} symbols", row.len()));
            }
            if let Some(c) = row.iter().find(|c| !(**c >= FLOOR && c.is_finite())) {
                return Err(format!("A_o row {i} holds count {c} below floor"));
            }
            let s: f64 = self.obs_likelihood(i).iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(format!("A_o row {i} sums to {s}"));
            }
        }
        for a in Action::ALL {
            let rows = &self.transitions[a.index()];
            if rows.len() != n {
                return Err(format!("B_s[{a}] has {} rows for {n} nodes", rows.len()));
            }
            for (j, row) in rows.iter().enumerate() {
                if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(format!("B_s[{a}][{j}] not sorted"));
                }
                for &(t, c) in row {
                    if t >= n {
                        return Err(format!("B_s[{a}][{j}] targets missing node {t}"));
                    }
                    if !(c >= FLOOR && c.is_finite()) {
                        return Err(format!("B_s[{a}][{j}->{t}] count {c} below floor"));
                    }
                }
                let off = row.iter().filter(|e| e.0 != j).count();
                if off > MAX_NEIGHBOURS {
                    return Err(format!("B_s[{a}][{j}] has {off} targets"));
                }
                let s: f64 = self.row_probs(a, j).iter().map(|e| e.1).sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(format!("B_s[{a}][{j}] sums to {s}"));
                }
            }
        }
        for j in 0..n {
            let k = self.neighbours(j).len();
            if k > MAX_NEIGHBOURS {
                return Err(format!("node {j} links to {k} neighbours"));
            }
            for i in (j + 1)..n {
                let d = self.imagined[i].distance(&self.imagined[j]);
                if d < self.spacing * (1.0 - 1e-9) {
                    return Err(format!("anchors {j} and {i} only {d:.4} apart"));
                }
            }
        }
        Ok(())
    }
}

/// Normalised per-node Gaussian density of `pose` under each anchor.
pub fn pose_likelihood(model: &GenerativeModel, pose: &Pose) -> Vec<f64> {
    let var = model.anchor_stddev().powi(2);
    let logs: Vec<f64> = model
        .imagined_poses()
        .iter()
        .map(|a| {
            let d2 = (a.x - pose.x).powi(2) + (a.y - pose.y).powi(2);
            -d2 / (2.0 * var)
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    dirichlet::normalize(&mut w);
    w
}

/// Paired categorical beliefs over nodes and candidate poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub q_s: Vec<f64>,
    pub q_p: Vec<(Pose, f64)>,
}

impl Belief {
    /// All mass on one node and one pose.
    pub fn point(num_nodes: usize, node: usize, pose: Pose) -> Self {
        let mut q_s = vec![0.0; num_nodes];
        q_s[node] = 1.0;
        Self {
            q_s,
            q_p: vec![(pose, 1.0)],
        }
    }

    pub fn argmax_node(&self) -> usize {
        dirichlet::argmax(&self.q_s)
    }

    pub fn max_state_mass(&self) -> f64 {
        self.q_s.iter().cloned().fold(0.0, f64::max)
    }

    /// Pose candidate with the most mass (first on ties).
    pub fn believed_pose(&self) -> Pose {
        let mut best = 0;
        for (i, (_, w)) in self.q_p.iter().enumerate() {
            if *w > self.q_p[best].1 {
                best = i;
            }
        }
        self.q_p[best].0
    }

    /// Both distributions sum to one within `tol` and are non-negative.
    pub fn is_valid(&self, tol: f64) -> bool {
        let ok = |it: &mut dyn Iterator<Item = f64>| {
            let mut s = 0.0;
            for x in it {
                if !(x >= 0.0 && x.is_finite()) {
                    return false;
                }
                s += x;
            }
            (s - 1.0).abs() <= tol
        };
        ok(&mut self.q_s.iter().copied()) && ok(&mut self.q_p.iter().map(|e| e.1))
    }

    /// Grow `q_s` with zero mass for nodes appended to the model.
    pub fn resize(&mut self, num_nodes: usize) {
        self.q_s.resize(num_nodes, 0.0);
    }
}
