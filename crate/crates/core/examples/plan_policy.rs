//! Score every two-step policy on a tiny map and show how a preferred
//! observation changes the ranking.

use aif_nav::model::export::{MapDocument, MapEdge, MapNode, MAP_SCHEMA_VERSION};
use aif_nav::model::{Action, GenerativeModel};
use aif_nav::planner::{plan, policy_distribution, PlannerConfig};

/// A corridor 0 - 1 - 2 with a dead end above node 1. Node 2 shows symbol 1,
/// everything else symbol 0. Node 3 is unexplored.
fn corridor() -> aif_nav::Result<GenerativeModel> {
    let east = Action::heading(0);
    let north = Action::heading(3);
    let node = |id, x: f64, y: f64, visited, c: [f64; 2]| MapNode {
        id,
        anchor: [x, y],
        visited,
        obs_mode: 0,
        obs_counts: c.to_vec(),
    };
    let edge = |a: Action, from, to| MapEdge {
        action: a.label(),
        from,
        to,
        count: 5.0,
        prob: 0.0,
    };
    MapDocument {
        version: MAP_SCHEMA_VERSION,
        spacing: 1.0,
        resolution: None,
        num_symbols: 2,
        confidence: 1.0,
        nodes: vec![
            node(0, 0.0, 0.0, true, [20.0, 1e-3]),
            node(1, 1.0, 0.0, true, [20.0, 1e-3]),
            node(2, 2.0, 0.0, true, [1e-3, 20.0]),
            node(3, 1.0, 1.0, false, [1e-3, 1e-3]),
        ],
        edges: vec![
            edge(east, 0, 1),
            edge(east, 1, 2),
            edge(east.opposite(), 1, 0),
            edge(east.opposite(), 2, 1),
            edge(north, 1, 3),
            edge(north.opposite(), 3, 1),
        ],
    }
    .into_model()
}

fn show(title: &str, model: &GenerativeModel, cfg: &PlannerConfig) -> aif_nav::Result<()> {
    let mut q = vec![0.0; model.len()];
    q[0] = 1.0;
    let mut scored = plan(model, &q, cfg)?;
    let totals: Vec<f64> = scored.iter().map(|s| s.efe.total).collect();
    let probs = policy_distribution(&totals, cfg.temperature)?;
    let mut ranked: Vec<(f64, _)> = probs.into_iter().zip(scored.drain(..)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("{title}");
    println!("  policy          P      G       learn  infer  coll   pref");
    for (p, s) in ranked.iter().take(5) {
        let acts: Vec<String> = s.policy.actions.iter().map(|a| a.label()).collect();
        let e = &s.efe;
        println!(
            "  {:<14} {p:.3}  {:>6.2}  {:>5.2}  {:>5.2}  {:>5.2}  {:>5.2}",
            acts.join(" "),
            e.total,
            e.learning_gain,
            e.inference_gain,
            e.collision_cost,
            e.preference_value
        );
    }
    Ok(())
}

fn main() -> aif_nav::Result<()> {
    let model = corridor()?;
    let explore = PlannerConfig {
        horizon: 2,
        ..Default::default()
    };
    show(
        "no preference: curiosity pulls toward the unexplored node",
        &model,
        &explore,
    )?;
    let seek = PlannerConfig {
        utility_weight: 6.0,
        preferred_symbol: Some(1),
        ..explore
    };
    println!();
    show("preferring symbol 1: node 2 wins", &model, &seek)
}
