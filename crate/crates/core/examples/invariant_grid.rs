// Robust feasibility over a coarse joint-space grid, and a check that the
// default pick-and-place plan only visits feasible states.

use armsim::geometry_sets::invariant_grid;
use armsim::nominal_planner::validate_plan;
use armsim::Scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::default();
    let grid = invariant_grid(&sc, 3)?;
    println!("{} nodes, member fraction {:.3}", grid.cells.len(), grid.member_fraction());

    let report = validate_plan(&sc.plan, &grid, &sc.arm.joint_limits, 20);
    println!("default plan valid: {}", report.is_valid());
    for v in report.violations.iter().take(5) {
        println!("  {v:?}");
    }

    let mut csv = Vec::new();
    grid.write_csv(&mut csv)?;
    let text = String::from_utf8(csv)?;
    for line in text.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
