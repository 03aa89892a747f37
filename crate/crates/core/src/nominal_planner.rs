//! Phase-based pick-and-place cycle tracked with a saturated proportional law.

use serde::{Deserialize, Serialize};

use crate::arm_model::{self, clamp_input, ControlInput, InputLimits, JointLimits, JointState};
use crate::error::ConfigError;
use crate::geometry_sets::{InvariantGrid, Membership};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub name: String,
    pub target: JointState,
    #[serde(default)]
    pub dwell: f64,
    #[serde(default = "one")]
    pub rate_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Phase {
    pub fn new(name: &str, target: JointState, dwell: f64) -> Self {
        Self {
            name: name.to_string(),
            target,
            dwell,
            rate_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasePlan {
    pub phases: Vec<Phase>,
    /// Proportional gain, 1/s.
    pub gain: f64,
    /// Per-joint convergence tolerance, rad.
    pub tolerance: f64,
}

/// Poses of the default cell: picking at azimuth -1.2 rad, placing at +1.2 rad,
/// transiting at about 4.6 m so that the arm clears every obstacle class
/// while carrying.
pub mod poses {
    use crate::arm_model::JointState;

    pub const HOME: JointState = JointState::new(-0.2, 0.9, 1.3, 0.0);
    pub const PICK: JointState = JointState::new(-0.5, -0.3, 0.1, -1.2);
    pub const PICK_HIGH: JointState = JointState::new(-0.2, 0.9, 1.3, -1.2);
    pub const PLACE_HIGH: JointState = JointState::new(-0.2, 0.9, 1.3, 1.2);
    pub const PLACE: JointState = JointState::new(-0.5, -0.3, 0.1, 1.2);
}

impl Default for PhasePlan {
    fn default() -> Self {
        use poses::*;
        Self {
            phases: vec![
                Phase::new("HOME", HOME, 0.0),
                Phase::new("PICK_DESCEND", PICK, 0.0),
                Phase::new("GRASP", PICK, 0.5),
                Phase::new("LIFT", PICK_HIGH, 0.0),
                Phase::new("ROTATE", PLACE_HIGH, 0.0),
                Phase::new("PLACE_DESCEND", PLACE, 0.0),
                Phase::new("RELEASE", PLACE, 0.5),
            ],
            gain: 2.0,
            tolerance: 0.02,
        }
    }
}

impl PhasePlan {
    pub fn validate(&self, limits: &JointLimits) -> Result<(), ConfigError> {
        if self.phases.is_empty() {
            return Err(ConfigError::invalid("phase plan is empty"));
        }
        if !(self.gain > 0.0 && self.tolerance > 0.0) {
            return Err(ConfigError::invalid("plan gain and tolerance must be positive"));
        }
        for p in &self.phases {
            if !(p.dwell >= 0.0) {
                return Err(ConfigError::invalid(format!("phase {}: negative dwell", p.name)));
            }
            if !(p.rate_scale > 0.0 && p.rate_scale <= 1.0) {
                return Err(ConfigError::invalid(format!("phase {}: rate_scale must be in (0, 1]", p.name)));
            }
            if !limits.contains(&p.target) {
                return Err(ConfigError::invalid(format!(
                    "phase {}: target outside joint limits",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> PhaseProgress {
        PhaseProgress {
            index: 0,
            dwell_remaining: self.phases[0].dwell,
            cycles: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseProgress {
    pub index: usize,
    pub dwell_remaining: f64,
    pub cycles: u32,
}

/// Saturated proportional rate toward the current phase target. Once every
/// joint is within tolerance the dwell timer runs down; when it expires the
/// plan advances, wrapping to the first phase and counting a cycle, and the
/// command is taken from the next phase in the same step.
pub fn nominal_control(
    state: &JointState,
    progress: &PhaseProgress,
    plan: &PhasePlan,
    limits: &InputLimits,
    dt: f64,
) -> (ControlInput, PhaseProgress) {
    let x = state.to_array();
    let mut next = *progress;
    let mut timer_running = true;
    // bounded so a plan whose targets all coincide cannot spin forever
    for _ in 0..=plan.phases.len() {
        let phase = &plan.phases[next.index];
        let target = phase.target.to_array();
        let mut raw = [0.0; 4];
        let mut converged = true;
        for i in 0..4 {
            let e = target[i] - x[i];
            converged &= e.abs() < plan.tolerance;
            raw[i] = plan.gain * e;
        }
        let u = clamp_input(&ControlInput::from(raw), limits).scale(phase.rate_scale);
        if !(converged && timer_running) {
            return (u, next);
        }
        next.dwell_remaining -= dt;
        // half-step slack absorbs rounding in repeated subtraction
        if next.dwell_remaining > 0.5 * dt {
            return (u, next);
        }
        next.index = (next.index + 1) % plan.phases.len();
        if next.index == 0 {
            next.cycles += 1;
        }
        next.dwell_remaining = plan.phases[next.index].dwell;
        // a dwell on the new phase starts counting from the next step
        timer_running = next.dwell_remaining <= 0.0;
    }
    let phase = &plan.phases[next.index];
    let mut raw = [0.0; 4];
    for i in 0..4 {
        raw[i] = plan.gain * (phase.target.to_array()[i] - x[i]);
    }
    (clamp_input(&ControlInput::from(raw), limits).scale(phase.rate_scale), next)
}

/// Inputs the nominal planner would issue over `steps` steps from `state`.
pub fn nominal_rollout(
    state: &JointState,
    progress: &PhaseProgress,
    plan: &PhasePlan,
    limits: &InputLimits,
    dt: f64,
    steps: usize,
) -> Vec<ControlInput> {
    let mut x = *state;
    let mut prog = *progress;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (u, p) = nominal_control(&x, &prog, plan, limits, dt);
        out.push(u);
        x = arm_model::step(&x, &u, dt);
        prog = p;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanIssue {
    OutsideJointLimits,
    NotRobustlyFeasible,
    Undecided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanViolation {
    /// Index of the phase whose target (fraction 0) or approach segment
    /// (fraction in (0, 1)) is affected.
    pub phase: usize,
    pub fraction: f64,
    pub point: JointState,
    pub issue: PlanIssue,
}

#[derive(Debug, Clone, Default)]
pub struct PlanReport {
    pub checked: usize,
    pub violations: Vec<PlanViolation>,
}

impl PlanReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every phase target and `samples` interpolated points on each segment
/// leading into it against the joint limits and the invariant grid.
pub fn validate_plan(plan: &PhasePlan, grid: &InvariantGrid, limits: &JointLimits, samples: usize) -> PlanReport {
    let mut report = PlanReport::default();
    let n = plan.phases.len();
    for (i, phase) in plan.phases.iter().enumerate() {
        let prev = plan.phases[(i + n - 1) % n].target.to_array();
        let cur = phase.target.to_array();
        for s in 0..samples.max(1) {
            let f = s as f64 / samples.max(1) as f64;
            // f = 0 is the target itself, f > 0 walks back toward the previous one
            let mut p = [0.0; 4];
            for a in 0..4 {
                p[a] = cur[a] + f * (prev[a] - cur[a]);
            }
            let point = JointState::from(p);
            report.checked += 1;
            let issue = if !limits.contains(&point) {
                Some(PlanIssue::OutsideJointLimits)
            } else {
                match grid.nearest(&point).membership {
                    Membership::Member(_) => None,
                    Membership::NonMember => Some(PlanIssue::NotRobustlyFeasible),
                    Membership::Unknown => Some(PlanIssue::Undecided),
                }
            };
            if let Some(issue) = issue {
                report.violations.push(PlanViolation {
                    phase: i,
                    fraction: f,
                    point,
                    issue,
                });
            }
        }
    }
    report
}
