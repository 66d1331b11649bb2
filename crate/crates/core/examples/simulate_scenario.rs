//! Load a scenario file, simulate one run and summarize its scans.

use std::path::Path;

use tfot::metrics::Trajectory;
use tfot::scenario::{generate_scans, simulate_truth, RunStreams, ScenarioConfig};

fn main() -> tfot::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "crates/core/scenarios/two_target.toml".into());
    let cfg = ScenarioConfig::load(Path::new(&path))?;
    let mut streams = RunStreams::new(cfg.seed);
    let truth = simulate_truth(&cfg, &mut streams)?;
    let scans = generate_scans(&cfg, &truth, &mut streams)?;

    let clutter: usize = scans.iter().map(|s| s.origins.iter().filter(|o| o.is_none()).count()).sum();
    println!(
        "{}: {} steps, {} targets, {:.1} clutter points per scan",
        cfg.name,
        scans.len(),
        truth.len(),
        clutter as f64 / scans.len() as f64
    );
    for (i, t) in truth.iter().enumerate() {
        let start = t.position(cfg.time(1));
        let end = t.position(cfg.time(cfg.steps));
        println!("target {i}: {:.1?} -> {:.1?}", start.as_slice(), end.as_slice());
    }
    Ok(())
}
