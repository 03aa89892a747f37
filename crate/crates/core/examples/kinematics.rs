// Forward kinematics of the default arm at the plan's key poses, and a few
// Euler steps under a constant joint-rate command.

use armsim::arm_model::{end_effector, fk_points, radial_height, step, ArmGeometry, ControlInput, JointState};
use armsim::nominal_planner::poses;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let geom = ArmGeometry::default();
    println!("reach {:.2} m", geom.reach());

    for (name, x) in [
        ("home", poses::HOME),
        ("pick", poses::PICK),
        ("pick_high", poses::PICK_HIGH),
        ("place", poses::PLACE),
    ] {
        let p = fk_points(&x, &geom);
        let (rho, z) = radial_height(&x, &geom);
        println!(
            "{name:>9}: p4 = ({:6.3}, {:6.3}, {:5.3})  rho {rho:5.3}  z {z:5.3}",
            p.p4[0], p.p4[1], p.p4[2]
        );
        // every link keeps its length
        let l3 = dist(p.p3, p.p4);
        if (l3 - geom.l3).abs() > 1e-12 {
            return Err(format!("link 3 length drifted to {l3}").into());
        }
    }

    let mut x = JointState::new(0.0, 0.0, 0.0, 0.0);
    let u = ControlInput::new(0.2, 0.5, -0.3, 0.4);
    for k in 1..=5 {
        x = step(&x, &u, 0.1);
        let p = end_effector(&x, &geom);
        println!("step {k}: ({:6.3}, {:6.3}, {:5.3})", p[0], p[1], p[2]);
    }
    Ok(())
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
