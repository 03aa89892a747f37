// One receding-horizon solve: the arm sits at the pick pose while a 3.7 m
// obstacle is predicted inside its reach, so the optimal plan lifts the
// end-effector over the tightened floor.

use armsim::geometry_sets::tighten_workspace;
use armsim::nominal_planner::poses;
use armsim::rmpc::{solve_rmpc, RmpcProblem};
use armsim::Scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::default();
    let np = sc.rmpc.horizon;
    let dist = sc.disturbance.to_3d(sc.dt);
    let floor = vec![3.7; np];
    let tightened = tighten_workspace(&sc.workspace, &dist, &floor, np, sc.rmpc.tightening)?;

    let mut problem = RmpcProblem {
        initial: poses::PICK,
        horizon: np,
        dt: sc.dt,
        geometry: sc.arm.geometry,
        joint_limits: sc.arm.joint_limits,
        input_limits: sc.arm.input_limits,
        tightened,
        weights: sc.rmpc.weights,
        eps_max: sc.rmpc.eps_max,
        reference: None,
    };
    problem.validate()?;

    let sol = solve_rmpc(&problem, None, &sc.rmpc.solver);
    println!(
        "{:?} after {} iterations, objective {:.3}, max slack {:.3}",
        sol.status,
        sol.iterations,
        sol.objective,
        sol.max_slack()
    );
    for (k, (u, x)) in sol.controls.iter().zip(&sol.states[1..]).enumerate() {
        let (_, z) = armsim::arm_model::radial_height(x, &sc.arm.geometry);
        println!(
            "k={k}: u = [{:5.2} {:5.2} {:5.2} {:5.2}]  z = {z:.2}  floor {:.2}  slack {:.2}",
            u.d_alpha, u.d_beta, u.d_gamma, u.d_theta, problem.tightened.floors[k], sol.slacks[k]
        );
    }

    // re-solve one step later from the shifted plan
    problem.initial = sol.states[1];
    let next = solve_rmpc(&problem, Some(&sol), &sc.rmpc.solver);
    println!("warm-started re-solve: {:?} in {} iterations", next.status, next.iterations);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
