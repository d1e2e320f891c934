//! Grow a map from a single node using ray scans of a corridor.
//!
//! At each node the collision probabilities along the twelve headings are
//! read off the simulator, candidate poses are scored, and the best one is
//! added. Headings that land on an existing anchor become links instead.

use aif_nav::model::{GenerativeModel, HEADINGS};
use aif_nav::sim::env::TOLMAN_MAP;
use aif_nav::sim::{GridEnv, SimConfig, Simulator};
use aif_nav::structure::{apply_link, grow_in_place, propose_candidates, StructureConfig};

fn main() -> aif_nav::Result<()> {
    let env = GridEnv::parse(TOLMAN_MAP)?;
    let symbols = env.num_symbols();
    let mut sim = Simulator::new(env, SimConfig::default())?;
    let first = sim.sense();
    let mut model = GenerativeModel::new(&first.obs, first.pose, 1.0, symbols)?;
    let cfg = StructureConfig::default();

    let mut node = 0;
    for round in 0..6 {
        let scan = sim.sense().scan;
        let collision: [f64; HEADINGS] =
            std::array::from_fn(|h| if scan.collision[h] { 1.0 } else { 0.0 });
        let proposals = propose_candidates(&model, node, &collision, &cfg)?;
        for link in &proposals.links {
            apply_link(&mut model, node, link, &cfg)?;
        }
        println!(
            "round {round}: at node {node}, {} candidates, {} links",
            proposals.candidates.len(),
            proposals.links.len()
        );
        for c in &proposals.candidates {
            println!(
                "  {} toward {} G={:.3} prior={:.3}",
                c.pose, c.heading, c.efe, c.prior
            );
        }
        let Some(best) = proposals
            .candidates
            .iter()
            .max_by(|a, b| a.prior.total_cmp(&b.prior))
        else {
            break;
        };
        let new = grow_in_place(&mut model, best, node, &cfg)?;
        // walk there so the next scan is taken from the new node
        let step = sim.step(best.heading);
        if !step.succeeded {
            break;
        }
        node = new;
    }
    model
        .check_invariants()
        .map_err(aif_nav::Error::InvalidArgument)?;
    println!("grew {} nodes", model.len());
    for i in 0..model.len() {
        println!("  {i}: {} -> {:?}", model.anchor(i), model.neighbours(i));
    }
    Ok(())
}
