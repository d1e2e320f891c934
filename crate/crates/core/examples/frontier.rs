//! The frontier baseline: breadth-first toward the nearest unknown cell
//! bordering known free space, on the small warehouse.

use aif_nav::sim::env::MINI_WAREHOUSE_MAP;
use aif_nav::sim::{frontier_agent_step, FrontierAgent, GridEnv, SimConfig, Simulator};

fn main() -> aif_nav::Result<()> {
    let env = GridEnv::parse(MINI_WAREHOUSE_MAP)?;
    let mut sim = Simulator::new(
        env,
        SimConfig {
            step_length: 1.0,
            lidar_range: 4.0,
            ..Default::default()
        },
    )?;
    let mut agent = FrontierAgent::new(&sim);
    println!("step  cell      known  coverage  distance");
    for t in 0..400 {
        let action = frontier_agent_step(&mut agent, &sim);
        sim.step(action);
        if t % 10 == 0 || sim.coverage() >= 1.0 {
            println!(
                "{t:>4}  {:<8}  {:>5}  {:>8.3}  {:>8.1}",
                format!("{:?}", sim.cell()),
                agent.known_free(),
                sim.coverage(),
                sim.distance()
            );
        }
        if sim.coverage() >= 1.0 {
            break;
        }
    }
    Ok(())
}
