//! The detour maze: three cumulative conditions (open, A blocked, A and B
//! blocked) for one agent that keeps its map between runs.
//!
//! Runs the two-seed quick variant; pass `--full` for all ten seeds.

use std::path::Path;

use aif_nav::harness::config::ScenarioConfig;
use aif_nav::harness::report::tolman_report;
use aif_nav::harness::scenario::run_scenario;
use aif_nav::sim::GridEnv;

fn main() -> aif_nav::Result<()> {
    let file = if std::env::args().any(|a| a == "--full") {
        "tolman.toml"
    } else {
        "tolman_quick.toml"
    };
    let cfg = ScenarioConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("scenarios")
            .join(file),
    )?;
    let env = GridEnv::parse(&std::fs::read_to_string(&cfg.map)?)?;
    let started = std::time::Instant::now();
    let res = run_scenario(&cfg)?;
    let rep = tolman_report(&env, &res.records)?;
    println!(
        "{} runs in {:.1}s",
        res.records.len(),
        started.elapsed().as_secs_f64()
    );
    for c in &rep.conditions {
        let modal = c.modal.map_or("none".to_string(), |r| r.to_string());
        println!(
            "condition {}: routes {:?}, incomplete {}, modal route {modal}",
            c.condition, c.counts, c.incomplete
        );
    }

    // where the agents spent their time
    let mut grid = vec![vec![0usize; env.width()]; env.height()];
    for (_, r, c, v) in &rep.heatmap {
        grid[*r][*c] += v;
    }
    let top = grid.iter().flatten().copied().max().unwrap_or(1).max(1);
    for (r, row) in grid.iter().enumerate() {
        let line: String = row
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                if env.is_wall((r, c)) {
                    '#'
                } else {
                    [' ', '.', ':', '+', '*', '@'][(v * 5).div_ceil(top).min(5)]
                }
            })
            .collect();
        println!("  {line}");
    }
    Ok(())
}
