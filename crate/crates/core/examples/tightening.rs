// Interval Pontryagin difference, the per-step tightened workspace, and a
// robust-feasibility query for one joint state.

use armsim::arm_model::JointState;
use armsim::geometry_sets::{
    pontryagin_diff_interval, robust_feasible_membership, tighten_workspace, Interval, TighteningMode,
};
use armsim::rmpc::SolverOptions;
use armsim::Scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let a = Interval::new(0.0, 6.5);
    for r in [0.05, 1.0, 4.0] {
        println!("{a} - {} = {}", Interval::symmetric(r), pontryagin_diff_interval(a, Interval::symmetric(r)));
    }

    let sc = Scenario::default();
    let dist = sc.disturbance.to_3d(sc.dt);
    println!("radial step {:.3} m, height margin {:.3} m", dist.delta_r, dist.delta_z);

    // an obstacle 3.7 m tall enters reach at step 4
    let np = sc.rmpc.horizon;
    let floor: Vec<f64> = (0..np).map(|k| if k >= 4 { 3.7 } else { sc.workspace.z_min }).collect();
    for mode in [TighteningMode::Constant, TighteningMode::Growing] {
        let tw = tighten_workspace(&sc.workspace, &dist, &floor, np, mode)?;
        let radii: Vec<String> = tw.radii.iter().map(|r| format!("{r:.2}")).collect();
        let floors: Vec<String> = tw.floors.iter().map(|z| format!("{z:.2}")).collect();
        println!("{mode:?}\n  radius [{}]\n  floor  [{}]", radii.join(" "), floors.join(" "));
    }

    let tw = tighten_workspace(&sc.workspace, &dist, &floor, np, sc.rmpc.tightening)?;
    let home = JointState::new(-0.2, 0.9, 1.3, 0.0);
    let m = robust_feasible_membership(&home, &sc.arm_spec(), &tw, &SolverOptions::default());
    println!("home pose robustly feasible under the 3.7 m floor: {}", m.is_member());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
