// A single obstacle passes the working arm. The supervisor hands control to
// the robust MPC while it is close, then blends back to nominal tracking.

use armsim::sim::{run, ControllerKind};
use armsim::Scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/flyby.json");
    let sc = Scenario::load(path)?;
    let out = run(&sc, ControllerKind::Rmpc, 0)?;

    for row in &out.log.rows {
        if let Some(ev) = &row.switch_event {
            println!("t = {:5.1} s  {ev:<18} d_min {:.2} m  z4 {:.2} m", row.t, row.d_min, row.p4[2]);
        }
    }
    let m = &out.metrics;
    println!(
        "completed {} at {:?} s, {} MPC steps, min separation {:.2} m, collisions {}",
        m.completed,
        m.completion_time,
        m.rmpc_steps,
        m.min_separation.unwrap_or(f64::INFINITY),
        m.collision_count
    );
    if m.collision_count > 0 {
        return Err("the flyby should be collision free".into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
