// A seeded world: obstacles move on straight lines, are measured with
// bounded noise, and are extrapolated into the per-step height floor the
// controller must clear.

use armsim::world::{interfering_floor, predict_path, World, WorldConfig};
use armsim::Scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/height_adaptation.json");
    let sc = Scenario::load(path)?;
    let cfg: &WorldConfig = &sc.world;
    let mut world = World::new(cfg, 7);

    for t in [0.0, 5.0, 10.0, 15.0] {
        world.advance(t);
        let meas = world.measure_all(t, &sc.disturbance);
        println!("t = {t:4.1} s, {} obstacle(s) in view", meas.len());
        for m in &meas {
            println!(
                "  #{} at ({:5.2}, {:5.2}) speed {:.2} height {:.2}",
                m.id, m.position[0], m.position[1], m.speed, m.height
            );
        }
        let paths: Vec<_> = meas.iter().map(|m| predict_path(m, sc.rmpc.horizon, sc.dt)).collect();
        let floor = interfering_floor(&paths, sc.workspace.r_arm, sc.workspace.z_min, sc.rmpc.horizon);
        let shown: Vec<String> = floor.iter().map(|z| format!("{z:.2}")).collect();
        println!("  floor over the horizon [{}]", shown.join(" "));
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
