//! Author a small map by hand, check it, and print it as Graphviz DOT.
//!
//! ```text
//! cargo run --example build_map | dot -Tsvg > map.svg
//! ```

use aif_nav::model::export::{
    export_map, MapDocument, MapEdge, MapFormat, MapNode, MAP_SCHEMA_VERSION,
};
use aif_nav::model::Action;

fn main() -> aif_nav::Result<()> {
    // Three nodes in an L, two symbols; node 2 has never been visited.
    let node = |id, x, y, visited, counts: [f64; 2]| MapNode {
        id,
        anchor: [x, y],
        visited,
        obs_mode: 0,
        obs_counts: counts.to_vec(),
    };
    let edge = |a: Action, from, to, count| MapEdge {
        action: a.label(),
        from,
        to,
        count,
        prob: 0.0,
    };
    let east = Action::heading(0);
    let north = Action::heading(3);
    let doc = MapDocument {
        version: MAP_SCHEMA_VERSION,
        spacing: 1.0,
        resolution: None,
        num_symbols: 2,
        confidence: 1.0,
        nodes: vec![
            node(0, 0.0, 0.0, true, [9.0, 1.0]),
            node(1, 1.0, 0.0, true, [1.0, 9.0]),
            node(2, 1.0, 1.0, false, [1e-3, 1e-3]),
        ],
        edges: vec![
            edge(east, 0, 1, 5.0),
            edge(east.opposite(), 1, 0, 5.0),
            edge(north, 1, 2, 3.0),
            edge(north.opposite(), 2, 1, 3.0),
        ],
    };
    let model = doc.into_model()?;
    model
        .check_invariants()
        .map_err(aif_nav::Error::InvalidArgument)?;

    for i in 0..model.len() {
        eprintln!(
            "node {i} at {}: P(o=1) = {:.3}, neighbours {:?}",
            model.anchor(i),
            model.obs_prob(i, 1),
            model.neighbours(i)
        );
    }
    eprintln!(
        "P(1 | 0, {east}) = {:.3}",
        model.transition_prob(east, 0, 1)
    );
    print!("{}", export_map(&model, MapFormat::Dot));
    Ok(())
}
