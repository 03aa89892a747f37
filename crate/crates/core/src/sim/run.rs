use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arm_model::{self, ControlInput};
use crate::baseline_controller::{baseline_step, Region};
use crate::error::SimError;
use crate::rmpc::SolveStatus;
use crate::supervisor::Supervisor;
use crate::world::{true_position, World};

use super::log::{write_obstacles, ObstacleRow, TrajectoryLog, TrajectoryRow};
use super::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Rmpc,
    Baseline,
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Rmpc => "rmpc",
            ControllerKind::Baseline => "baseline",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "rmpc" => Ok(ControllerKind::Rmpc),
            "baseline" => Ok(ControllerKind::Baseline),
            other => Err(format!("unknown controller {other:?} (expected rmpc or baseline)")),
        }
    }
}

/// Summary of one run. Solve times are wall-clock and not reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completed: bool,
    /// Time at which the last required cycle finished, s.
    pub completion_time: Option<f64>,
    pub cycles_completed: u32,
    pub collision_count: u32,
    /// Smallest end-effector distance to any obstacle volume, m.
    pub min_separation: Option<f64>,
    /// Steps with an all-zero command before the task was complete.
    pub stop_steps: u32,
    pub mode_switches: u32,
    pub mean_solve_time: Option<f64>,
    pub max_solve_time: Option<f64>,
    pub mean_slack: Option<f64>,
    pub max_slack: Option<f64>,
    pub steps: u32,
    pub rmpc_steps: u32,
    pub fallback_steps: u32,
    pub critical_steps: u32,
    /// Converged MPC steps whose successor state left the step-0 tightened
    /// set by more than the reported slack.
    pub step0_violations: u32,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: TrajectoryLog,
    pub obstacles: Vec<ObstacleRow>,
}

impl RunOutput {
    /// Write `trajectory.csv`, `obstacles.csv` and `metrics.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
        self.log.save(&dir.join("trajectory.csv"))?;
        let path = dir.join("obstacles.csv");
        let file = std::fs::File::create(&path).map_err(|e| SimError::io(&path, e))?;
        write_obstacles(&self.obstacles, std::io::BufWriter::new(file))?;
        let path = dir.join("metrics.json");
        let text = serde_json::to_string_pretty(&self.metrics)?;
        std::fs::write(&path, text + "\n").map_err(|e| SimError::io(&path, e))?;
        Ok(())
    }
}

/// Distance from a point to a vertical cylinder standing on the ground,
/// and whether the point is inside it.
pub fn cylinder_separation(p: [f64; 3], center: [f64; 2], radius: f64, height: f64) -> (f64, bool) {
    let gap = (p[0] - center[0]).hypot(p[1] - center[1]) - radius;
    let over = p[2] - height;
    let inside = gap < 0.0 && over < 0.0;
    (gap.max(0.0).hypot(over.max(0.0)), inside)
}

/// Slack on the step-0 check, matching the solver's feasibility tolerance.
const STEP0_TOL: f64 = 1e-6;

enum Controller {
    Rmpc(Box<Supervisor>),
    Baseline,
}

/// Simulate one run: world advance, measurement, controller, arm step,
/// collision check, log. Deterministic for a given scenario, controller and
/// seed except for the solve-time fields.
pub fn run(scenario: &Scenario, controller: ControllerKind, seed: u64) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let dt = scenario.dt;
    let geom = &scenario.arm.geometry;
    let max_steps = (scenario.run.max_time / dt).round() as u64;

    let mut world = World::new(&scenario.world, seed);
    let mut ctrl = match controller {
        ControllerKind::Rmpc => Controller::Rmpc(Box::new(Supervisor::new(scenario))),
        ControllerKind::Baseline => Controller::Baseline,
    };
    let mut state = scenario.initial_state();
    let mut progress = scenario.plan.start();
    let mut log = TrajectoryLog::default();
    let mut obstacles = Vec::new();
    let mut prev_region: Option<Region> = None;

    let mut m = RunMetrics {
        completed: false,
        completion_time: None,
        cycles_completed: 0,
        collision_count: 0,
        min_separation: None,
        stop_steps: 0,
        mode_switches: 0,
        mean_solve_time: None,
        max_solve_time: None,
        mean_slack: None,
        max_slack: None,
        steps: 0,
        rmpc_steps: 0,
        fallback_steps: 0,
        critical_steps: 0,
        step0_violations: 0,
    };
    let mut solve_times = Vec::new();
    let mut slacks = Vec::new();
    let mut in_collision = false;

    for k in 0..max_steps {
        let t = k as f64 * dt;
        world.advance(t);
        let meas = world.measure_all(t, &scenario.disturbance);
        for (id, o) in world.active(t) {
            let p = true_position(o, t);
            obstacles.push(ObstacleRow {
                t,
                id,
                x: p[0],
                y: p[1],
                height: o.height,
            });
        }

        let p4 = arm_model::end_effector(&state, geom);
        let mut step0: Option<(f64, f64, f64, f64)> = None;
        let (input, row_extra) = match &mut ctrl {
            Controller::Rmpc(sup) => {
                let out = sup.control_step(&state, &progress, &meas, scenario);
                let d = &out.diagnostics;
                if out.mode == crate::supervisor::Mode::Rmpc {
                    m.rmpc_steps += 1;
                }
                if d.fallback {
                    m.fallback_steps += 1;
                }
                if let Some(st) = d.solve_time {
                    solve_times.push(st);
                }
                if let Some(e) = d.max_slack {
                    slacks.push(e);
                }
                if d.switch_event.is_some() {
                    m.mode_switches += 1;
                }
                if d.status == Some(SolveStatus::Converged) && !d.fallback {
                    if let Some(tw) = &d.tightened {
                        step0 = Some((tw.radii[0], tw.floors[0], tw.z_max, d.max_slack.unwrap_or(0.0)));
                    }
                }
                progress = out.progress;
                let extra = (
                    out.mode.label().to_string(),
                    d.d_min,
                    d.z_floor,
                    d.max_slack,
                    d.solve_time,
                    d.switch_event.clone(),
                );
                (out.input, extra)
            }
            Controller::Baseline => {
                let out = baseline_step(&state, &progress, &meas, scenario);
                if out.region == Region::Critical {
                    m.critical_steps += 1;
                }
                let event = match prev_region {
                    Some(r) if r != out.region => Some(format!("{}->{}", r.label(), out.region.label())),
                    _ => None,
                };
                if event.is_some() {
                    m.mode_switches += 1;
                }
                prev_region = Some(out.region);
                progress = out.progress;
                (out.input, (out.region.label().to_string(), out.d_min, None, None, None, event))
            }
        };
        if !input.is_finite() {
            return Err(SimError::Runtime(format!("non-finite control input at t={t}")));
        }
        if is_stop(&input) {
            m.stop_steps += 1;
        }
        let (mode, d_min, z_floor, eps, solve_time, switch_event) = row_extra;
        log.rows.push(TrajectoryRow {
            t,
            mode,
            state: state.to_array(),
            input: input.to_array(),
            p4,
            d_min,
            z_floor,
            eps_max_step: eps,
            solve_time_s: solve_time,
            switch_event,
        });

        state = arm_model::step(&state, &input, dt);
        if !state.is_finite() {
            return Err(SimError::Runtime(format!("non-finite arm state at t={}", t + dt)));
        }
        m.steps += 1;
        if let Some((r0, floor0, z_max, eps)) = step0 {
            let (rho, z) = arm_model::radial_height(&state, geom);
            if rho > r0 + STEP0_TOL || z < floor0 - eps - STEP0_TOL || z > z_max + STEP0_TOL {
                m.step0_violations += 1;
            }
        }

        let t_next = t + dt;
        let p_next = arm_model::end_effector(&state, geom);
        let mut colliding = false;
        for (_, o) in world.active(t_next) {
            let (sep, inside) = cylinder_separation(p_next, true_position(o, t_next), o.radius, o.height);
            m.min_separation = Some(m.min_separation.map_or(sep, |s: f64| s.min(sep)));
            colliding |= inside;
        }
        // count entries into an obstacle, not steps spent inside
        if colliding && !in_collision {
            m.collision_count += 1;
        }
        in_collision = colliding;

        m.cycles_completed = progress.cycles;
        if progress.cycles >= scenario.run.cycles {
            m.completed = true;
            m.completion_time = Some(t_next);
            break;
        }
    }

    if !solve_times.is_empty() {
        m.mean_solve_time = Some(solve_times.iter().sum::<f64>() / solve_times.len() as f64);
        m.max_solve_time = solve_times.iter().copied().reduce(f64::max);
    }
    if !slacks.is_empty() {
        m.mean_slack = Some(slacks.iter().sum::<f64>() / slacks.len() as f64);
        m.max_slack = slacks.iter().copied().reduce(f64::max);
    }
    Ok(RunOutput { metrics: m, log, obstacles })
}

/// Zero-input check used by the stop counter.
pub fn is_stop(u: &ControlInput) -> bool {
    u.norm() < 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_distance_cases() {
        // beside, below the top
        let (d, inside) = cylinder_separation([2.0, 0.0, 1.0], [0.0, 0.0], 0.5, 3.0);
        assert!((d - 1.5).abs() < 1e-15 && !inside);
        // above the footprint
        let (d, inside) = cylinder_separation([0.0, 0.0, 4.0], [0.0, 0.0], 0.5, 3.0);
        assert!((d - 1.0).abs() < 1e-15 && !inside);
        // diagonal from the rim
        let (d, _) = cylinder_separation([3.5, 0.0, 7.0], [0.0, 0.0], 0.5, 3.0);
        assert!((d - 5.0).abs() < 1e-12);
        let (d, inside) = cylinder_separation([0.1, 0.0, 1.0], [0.0, 0.0], 0.5, 3.0);
        assert!(d == 0.0 && inside);
    }

    #[test]
    fn controller_names() {
        assert_eq!("rmpc".parse::<ControllerKind>().unwrap(), ControllerKind::Rmpc);
        assert_eq!("baseline".parse::<ControllerKind>().unwrap(), ControllerKind::Baseline);
        assert!("pid".parse::<ControllerKind>().is_err());
    }
}
