//! Watch the belief track the true pose, lose it after a teleport, and find
//! it again.

use aif_nav::harness::{AgentParams, AifAgent};
use aif_nav::sim::env::TOLMAN_MAP;
use aif_nav::sim::{GridEnv, SimConfig, Simulator};

fn main() -> aif_nav::Result<()> {
    let env = GridEnv::parse(TOLMAN_MAP)?;
    let cfg = SimConfig {
        step_length: 1.0,
        lidar_range: 1.0,
        ..Default::default()
    };
    let mut sim = Simulator::new(env.clone(), cfg)?;
    let mut agent = AifAgent::new(&sim.sense(), env.num_symbols(), AgentParams::default(), 7)?;

    println!("step  true          believed      error  nodes  suspected");
    for t in 0..60 {
        if t == 35 {
            let back = env.start();
            sim.teleport(back)?;
            println!("---- teleported to {back:?} ----");
        }
        let action = agent.act()?;
        let step = sim.step(action);
        let rep = agent.observe(action, &step, &sim.sense())?;
        let truth = sim.pose();
        println!(
            "{t:>4}  {truth}  {}  {:>5.2}  {:>5}  {}",
            rep.believed_pose,
            truth.distance(&rep.believed_pose),
            agent.model().len(),
            rep.kidnap_suspected
        );
    }
    Ok(())
}
