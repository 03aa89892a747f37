//! Mode switching between nominal tracking and robust MPC.
//!
//! Each step: predict every measured obstacle over the horizon, take the
//! smallest predicted planar clearance to the current end-effector, and
//! decide the mode with a hysteresis band plus a safe-streak counter. In
//! robust mode the workspace is eroded by the disturbance set (with the
//! interfering obstacle heights as floor), the MPC is solved and its first
//! input applied. Leaving robust mode blends linearly back to nominal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arm_model::{self, clamp_input, ControlInput, JointState};
use crate::error::ConfigError;
use crate::geometry_sets::{tighten_workspace, TightenedWorkspace};
use crate::nominal_planner::{nominal_control, nominal_rollout, PhaseProgress};
use crate::rmpc::{RmpcProblem, RmpcSolution, RmpcSolver, SolveStatus};
use crate::sim::Scenario;
use crate::world::{interfering_floor, predict_path, Measurement, PredictedPath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Nominal,
    Rmpc,
    /// Weight of the nominal input, rising from 0 to 1.
    Blending(f64),
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Nominal => "nominal",
            Mode::Rmpc => "rmpc",
            Mode::Blending(_) => "blending",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisorConfig {
    /// Activation distance, m.
    pub d_act: f64,
    /// Deactivation distance, m.
    pub d_deact: f64,
    /// Consecutive steps beyond `d_deact` required before leaving robust mode.
    pub n_safe: u32,
    /// Blend duration, s.
    pub t_blend: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            d_act: 1.5,
            d_deact: 2.5,
            n_safe: 10,
            t_blend: 0.5,
        }
    }
}

impl SupervisorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.d_act > 0.0 && self.d_deact > self.d_act) {
            return Err(ConfigError::invalid("supervisor requires d_deact > d_act > 0"));
        }
        if self.n_safe < 1 {
            return Err(ConfigError::invalid("supervisor n_safe must be at least 1"));
        }
        if !(self.t_blend >= 0.0) {
            return Err(ConfigError::invalid("supervisor t_blend must be nonnegative"));
        }
        Ok(())
    }
}

/// Smallest predicted planar clearance between any obstacle footprint and the
/// end-effector's current planar position; `+inf` without obstacles.
pub fn min_predicted_distance(paths: &[PredictedPath], p4: [f64; 3]) -> f64 {
    let mut d_min = f64::INFINITY;
    for path in paths {
        for p in &path.positions {
            let d = ((p[0] - p4[0]).hypot(p[1] - p4[1]) - path.radius).max(0.0);
            d_min = d_min.min(d);
        }
    }
    d_min
}

/// One transition of the switching automaton. Returns the new mode and the
/// updated safe-streak counter.
pub fn decide_mode(current: Mode, d_min: f64, streak: u32, cfg: &SupervisorConfig, dt: f64) -> (Mode, u32) {
    let blend_step = if cfg.t_blend > 0.0 { dt / cfg.t_blend } else { 1.0 };
    match current {
        Mode::Nominal => {
            if d_min < cfg.d_act {
                (Mode::Rmpc, 0)
            } else {
                (Mode::Nominal, 0)
            }
        }
        Mode::Rmpc => {
            if d_min > cfg.d_deact {
                let streak = streak + 1;
                if streak >= cfg.n_safe {
                    if blend_step >= 1.0 {
                        (Mode::Nominal, 0)
                    } else {
                        (Mode::Blending(blend_step), 0)
                    }
                } else {
                    (Mode::Rmpc, streak)
                }
            } else {
                (Mode::Rmpc, 0)
            }
        }
        Mode::Blending(p) => {
            if d_min < cfg.d_act {
                (Mode::Rmpc, 0)
            } else if p >= 1.0 || p + blend_step >= 1.0 - 1e-12 {
                (Mode::Nominal, 0)
            } else {
                (Mode::Blending(p + blend_step), 0)
            }
        }
    }
}

/// Convex combination `lambda * nominal + (1 - lambda) * robust`.
pub fn blend(lambda: f64, nominal: &ControlInput, robust: &ControlInput) -> ControlInput {
    let a = nominal.to_array();
    let b = robust.to_array();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
    }
    ControlInput::from(out)
}

/// Largest admissible upward velocity of the end-effector, used when the
/// robust problem is infeasible. The base does not rotate.
pub fn ascent_fallback(state: &JointState, scenario: &Scenario) -> ControlInput {
    let d = arm_model::radial_height_derivatives(state, &scenario.arm.geometry);
    let x = state.to_array();
    let lim = &scenario.arm.input_limits;
    let jl = &scenario.arm.joint_limits;
    let mut u = [0.0; 4];
    for i in 0..3 {
        let g = d.d_z[i];
        if g > 1e-9 && x[i] < jl.upper[i] {
            u[i] = lim.upper[i];
        } else if g < -1e-9 && x[i] > jl.lower[i] {
            u[i] = lim.lower[i];
        }
    }
    ControlInput::from(u)
}

#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    pub d_min: f64,
    /// Tightened floor at the first prediction step, when the MPC ran.
    pub z_floor: Option<f64>,
    pub max_slack: Option<f64>,
    pub solve_time: Option<f64>,
    pub status: Option<SolveStatus>,
    pub iterations: Option<usize>,
    pub kkt_residual: Option<f64>,
    pub fallback: bool,
    /// `"from->to"` on the step a mode change happens.
    pub switch_event: Option<String>,
    pub tightened: Option<TightenedWorkspace>,
}

#[derive(Debug, Clone)]
pub struct SupervisorOutput {
    pub input: ControlInput,
    pub mode: Mode,
    pub progress: PhaseProgress,
    pub diagnostics: StepDiagnostics,
}

/// Owns the mode automaton and the MPC warm start. One `control_step` at a time.
#[derive(Debug, Clone)]
pub struct Supervisor {
    mode: Mode,
    streak: u32,
    last_robust: ControlInput,
    warm: Option<RmpcSolution>,
    solver: RmpcSolver,
}

impl Supervisor {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            mode: Mode::Nominal,
            streak: 0,
            last_robust: ControlInput::ZERO,
            warm: None,
            solver: RmpcSolver::new(scenario.rmpc.solver),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn control_step(
        &mut self,
        state: &JointState,
        progress: &PhaseProgress,
        measurements: &[Measurement],
        scenario: &Scenario,
    ) -> SupervisorOutput {
        let dt = scenario.dt;
        let np = scenario.rmpc.horizon;
        let p4 = arm_model::end_effector(state, &scenario.arm.geometry);
        let paths: Vec<PredictedPath> = measurements.iter().map(|m| predict_path(m, np, dt)).collect();
        let d_min = min_predicted_distance(&paths, p4);

        let (mode, streak) = decide_mode(self.mode, d_min, self.streak, &scenario.supervisor, dt);
        let mut diag = StepDiagnostics {
            d_min,
            ..StepDiagnostics::default()
        };
        if mode.label() != self.mode.label() {
            diag.switch_event = Some(format!("{}->{}", self.mode.label(), mode.label()));
        }

        let (u_nom, next_progress) =
            nominal_control(state, progress, &scenario.plan, &scenario.arm.input_limits, dt);

        let input = match mode {
            Mode::Nominal => {
                self.warm = None;
                u_nom
            }
            Mode::Blending(lambda) => {
                self.warm = None;
                blend(lambda, &u_nom, &self.last_robust)
            }
            Mode::Rmpc => {
                let u = self.robust_input(state, progress, &paths, scenario, &mut diag);
                self.last_robust = u;
                u
            }
        };

        self.mode = mode;
        self.streak = streak;
        SupervisorOutput {
            input: clamp_input(&input, &scenario.arm.input_limits),
            mode,
            progress: next_progress,
            diagnostics: diag,
        }
    }

    fn robust_input(
        &mut self,
        state: &JointState,
        progress: &PhaseProgress,
        paths: &[PredictedPath],
        scenario: &Scenario,
        diag: &mut StepDiagnostics,
    ) -> ControlInput {
        let np = scenario.rmpc.horizon;
        let dt = scenario.dt;
        let ws = &scenario.workspace;
        let floor = interfering_floor(paths, ws.r_arm, ws.z_min, np);
        let dist = scenario.disturbance.to_3d(dt);
        let tightened = match tighten_workspace(ws, &dist, &floor, np, scenario.rmpc.tightening) {
            Ok(t) => t,
            Err(e) => {
                log::debug!("tightening failed: {e}");
                diag.fallback = true;
                self.warm = None;
                return ascent_fallback(state, scenario);
            }
        };
        diag.z_floor = Some(tightened.floors[0]);

        let reference = nominal_rollout(state, progress, &scenario.plan, &scenario.arm.input_limits, dt, np);
        let problem = RmpcProblem {
            initial: *state,
            horizon: np,
            dt,
            geometry: scenario.arm.geometry,
            joint_limits: scenario.arm.joint_limits,
            input_limits: scenario.arm.input_limits,
            tightened: tightened.clone(),
            weights: scenario.rmpc.weights,
            eps_max: scenario.rmpc.eps_max,
            reference: Some(reference),
        };
        let warm = self.warm.as_ref().map(|w| w.shifted());
        let sol = self.solver.solve(&problem, warm.as_deref());
        diag.solve_time = Some(sol.solve_time);
        diag.status = Some(sol.status);
        diag.iterations = Some(sol.iterations);
        diag.kkt_residual = Some(sol.kkt_residual);
        diag.max_slack = Some(sol.max_slack());
        diag.tightened = Some(tightened);

        if sol.status == SolveStatus::Infeasible {
            diag.fallback = true;
            self.warm = None;
            return ascent_fallback(state, scenario);
        }
        let u = sol.first_input();
        self.warm = Some(sol);
        u
    }
}
