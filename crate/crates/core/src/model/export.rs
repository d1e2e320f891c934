//! JSON and Graphviz renderings of a [`GenerativeModel`].
//!
//! The JSON form is lossless: importing and re-exporting reproduces the same
//! bytes. Edges list every stored transition entry, including Stay
//! self-loops and any explicit "blocked" self entries.

use serde::{Deserialize, Serialize};

use super::{Action, GenerativeModel, Pose};
use crate::error::{Error, Result};

pub const MAP_SCHEMA_VERSION: u32 = 1;

/// Pen width of an edge with probability one.
const MAX_PENWIDTH: f64 = 5.0;

const PALETTE: [&str; 12] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#ffff33", "#a65628", "#f781bf",
    "#999999", "#66c2a5", "#fc8d62", "#8da0cb",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapFormat {
    Json,
    Dot,
}

impl std::str::FromStr for MapFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(MapFormat::Json),
            "dot" => Ok(MapFormat::Dot),
            other => Err(Error::InvalidArgument(format!(
                "unknown map format `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapDocument {
    pub version: u32,
    pub spacing: f64,
    pub resolution: Option<f64>,
    pub num_symbols: usize,
    pub confidence: f64,
    pub nodes: Vec<MapNode>,
    pub edges: Vec<MapEdge>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapNode {
    pub id: usize,
    pub anchor: [f64; 2],
    pub visited: bool,
    pub obs_mode: u32,
    pub obs_counts: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapEdge {
    pub action: String,
    pub from: usize,
    pub to: usize,
    pub count: f64,
    pub prob: f64,
}

impl MapDocument {
    pub fn from_model(model: &GenerativeModel) -> Self {
        let nodes = (0..model.len())
            .map(|i| {
                let a = model.anchor(i);
                MapNode {
                    id: i,
                    anchor: [a.x, a.y],
                    visited: model.is_visited(i),
                    obs_mode: model.obs_mode(i),
                    obs_counts: model.obs_counts(i).to_vec(),
                }
            })
            .collect();
        let mut edges = Vec::new();
        for a in Action::ALL {
            for from in 0..model.len() {
                for &(to, count) in model.row(a, from) {
                    edges.push(MapEdge {
                        action: a.label(),
                        from,
                        to,
                        count,
                        prob: model.transition_prob(a, from, to),
                    });
                }
            }
        }
        Self {
            version: MAP_SCHEMA_VERSION,
            spacing: model.spacing(),
            resolution: model.resolution(),
            num_symbols: model.num_symbols(),
            confidence: model.confidence(),
            nodes,
            edges,
        }
    }

    pub fn into_model(self) -> Result<GenerativeModel> {
        if self.version != MAP_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported map schema version {}",
                self.version
            )));
        }
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("map has no nodes".into()));
        }
        let mut m = GenerativeModel::empty(self.spacing, self.resolution, self.num_symbols);
        for (i, n) in self.nodes.into_iter().enumerate() {
            if n.id != i {
                return Err(Error::InvalidArgument(format!(
                    "node ids must be dense, found {}",
                    n.id
                )));
            }
            if n.obs_counts.len() != self.num_symbols {
                return Err(Error::DimensionMismatch(
                    n.obs_counts.len(),
                    self.num_symbols,
                ));
            }
            let id = m.push_node(Pose::new(n.anchor[0], n.anchor[1]), n.visited);
            m.set_obs_counts(id, n.obs_counts);
        }
        // push_node seeds Stay self-loops; the document is authoritative.
        for from in 0..m.len() {
            m.transitions[Action::Stay.index()][from].clear();
        }
        for e in self.edges {
            let a = Action::parse_label(&e.action)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown action `{}`", e.action)))?;
            m.check_node(e.from)?;
            m.check_node(e.to)?;
            let row = &mut m.transitions[a.index()][e.from];
            match row.binary_search_by_key(&e.to, |x| x.0) {
                Ok(_) => {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate edge {} {}->{}",
                        e.action, e.from, e.to
                    )))
                }
                Err(i) => row.insert(i, (e.to, super::dirichlet::clamp_count(e.count))),
            }
        }
        m.set_confidence(self.confidence);
        m.check_invariants().map_err(Error::InvalidArgument)?;
        Ok(m)
    }
}

pub fn to_json(model: &GenerativeModel) -> String {
    let mut s = serde_json::to_string_pretty(&MapDocument::from_model(model))
        .expect("map document serialises");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<GenerativeModel> {
    let doc: MapDocument = serde_json::from_str(text)?;
    doc.into_model()
}

/// Graphviz rendering. Pen width is proportional to the normalised
/// transition probability; fill colour is keyed by the observation mode.
pub fn to_dot(model: &GenerativeModel) -> String {
    let mut out = String::new();
    out.push_str("digraph topological_map {\n");
    out.push_str("  node [shape=circle, style=filled, fontsize=10];\n");
    for i in 0..model.len() {
        let a = model.anchor(i);
        let colour = if model.is_visited(i) {
            PALETTE[model.obs_mode(i) as usize % PALETTE.len()]
        } else {
            "#ffffff"
        };
        out.push_str(&format!(
            "  n{i} [label=\"{i}\", pos=\"{:.3},{:.3}!\", fillcolor=\"{colour}\"];\n",
            a.x, a.y
        ));
    }
    for a in Action::ALL {
        for from in 0..model.len() {
            for &(to, _) in model.row(a, from) {
                let p = model.transition_prob(a, from, to);
                out.push_str(&format!(
                    "  n{from} -> n{to} [label=\"{}\", penwidth={:.4}];\n",
                    a.label(),
                    MAX_PENWIDTH * p
                ));
            }
        }
    }
    out.push_str("}\n");
    out
}

pub fn export_map(model: &GenerativeModel, format: MapFormat) -> String {
    match format {
        MapFormat::Json => to_json(model),
        MapFormat::Dot => to_dot(model),
    }
}
