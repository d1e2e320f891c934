//! Move an obstacle onto a cell the agent has already mapped and watch the
//! edges into that node collapse while a new node appears where it was.

use std::path::Path;

use aif_nav::harness::config::ScenarioConfig;
use aif_nav::harness::scenario::run_scenario;
use aif_nav::model::Action;

fn main() -> aif_nav::Result<()> {
    let mut cfg = ScenarioConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/obstacle.toml"),
    )?;
    cfg.seeds = vec![0];
    let o = cfg.obstacle.clone().expect("scenario has an obstacle");
    println!(
        "obstacle moves from {:?} to {:?} at step {}",
        o.first, o.second, o.move_step
    );
    let res = run_scenario(&cfg)?;
    for s in &res.obstacle {
        println!(
            "seed {}: node {:?} now blocked, {} incoming edges, worst after/before ratio {:?}",
            s.seed, s.blocked_node, s.edges_into_blocked, s.worst_ratio
        );
        println!(
            "  nodes grown near the vacated cell: {:?}",
            s.new_nodes_near_former
        );
    }
    let model = &res.models[&0];
    if let Some(node) = res.obstacle[0].blocked_node {
        for j in (0..model.len()).filter(|&j| j != node) {
            for a in Action::ALL {
                for (to, p) in model.row_probs(a, j) {
                    if to == node {
                        println!("  P({node} | {j}, {a}) = {p:.4}");
                    }
                }
            }
        }
    }
    Ok(())
}
