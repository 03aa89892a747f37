// A small seeded batch over both controllers, with per-controller summary
// statistics and the CSV/JSON report written to a temporary directory.

use armsim::sim::{batch, parse_seeds, ControllerKind};
use armsim::Scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/flyby.json");
    let sc = Scenario::load(path)?;
    let seeds = parse_seeds("0..3")?;
    let report = batch(&sc, &[ControllerKind::Rmpc, ControllerKind::Baseline], &seeds)?;

    for c in [ControllerKind::Rmpc, ControllerKind::Baseline] {
        for (seed, m) in report.metrics_for(c) {
            println!(
                "{:<8} seed {seed}: completion {:?} s, collisions {}, stops {}",
                c.label(),
                m.completion_time,
                m.collision_count,
                m.stop_steps
            );
        }
    }

    if let Some(s) = report.summary_for(ControllerKind::Rmpc) {
        println!("rmpc finished first on {:.0}% of seeds", 100.0 * s.win_rate.unwrap_or(0.0));
    }

    let dir = std::env::temp_dir().join(format!("armsim-batch-example-{}", std::process::id()));
    report.save(&dir)?;
    println!("report written to {}", dir.display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
