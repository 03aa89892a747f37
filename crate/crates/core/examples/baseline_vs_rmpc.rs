// The four-obstacle comparison scenario under both controllers, one seed.
// The potential-field baseline slows and stops near obstacles; the robust
// MPC lifts over them and keeps moving.

use armsim::sim::{run, ControllerKind};
use armsim::Scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/paper_comparison.json");
    let sc = Scenario::load(path)?;
    println!("{:<9} {:>10} {:>6} {:>9} {:>9} {:>8}", "", "completion", "stops", "critical", "min sep", "collide");
    for c in [ControllerKind::Rmpc, ControllerKind::Baseline] {
        let m = run(&sc, c, 0)?.metrics;
        let done = m.completion_time.map_or("-".to_string(), |t| format!("{t:.1} s"));
        println!(
            "{:<9} {:>10} {:>6} {:>9} {:>9.2} {:>8}",
            c.label(),
            done,
            m.stop_steps,
            m.critical_steps,
            m.min_separation.unwrap_or(f64::INFINITY),
            m.collision_count
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
