//! Active inference against the frontier baseline on the 40x40 warehouse:
//! distance travelled until 90% of the free cells have been seen.
//!
//! Takes a few seconds per seed in release mode. `--seeds N` picks how many.

use std::path::Path;

use aif_nav::harness::config::ScenarioConfig;
use aif_nav::harness::report::coverage_report;
use aif_nav::harness::scenario::run_scenario;

fn main() -> aif_nav::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args
        .iter()
        .position(|a| a == "--seeds")
        .and_then(|i| args.get(i + 1))
        .and_then(|s| s.parse().ok())
        .unwrap_or(2);
    let mut cfg = ScenarioConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/warehouse.toml"),
    )?;
    cfg.seeds = (0..seeds).collect();
    let res = run_scenario(&cfg)?;
    let rep = coverage_report(&res.records, 0.9, 10);
    for a in &rep.agents {
        println!("{}:", a.agent.as_str());
        for (seed, d, last) in &a.runs {
            let d = d.map_or("never".to_string(), |d| format!("{d:.1}"));
            println!("  seed {seed}: 90% after {d}, final coverage {last:.3}");
        }
        match a.median_distance {
            Some(m) => println!("  median {m:.1}"),
            None => println!("  median undefined: some run never reached 90%"),
        }
        for (d, med, lo, hi) in &a.band {
            println!("    d={d:>7.1}  coverage {med:.3} [{lo:.3}, {hi:.3}]");
        }
    }
    std::fs::write("coverage.svg", rep.svg())?;
    println!("wrote coverage.svg");
    Ok(())
}
