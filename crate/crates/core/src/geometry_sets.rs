//! Workspace set, disturbance sets, box Pontryagin difference, per-step
//! constraint tightening and the sampled robust-feasibility test.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm_model::{ArmGeometry, ControlInput, InputLimits, JointLimits, JointState};
use crate::error::{ConfigError, SimError};
use crate::rmpc::{CostWeights, RmpcProblem, RmpcSolver, SolveStatus, SolverOptions};
use crate::sim::Scenario;

/// Nominal task-space constraint set of the end-effector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceSet {
    pub r_arm: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for WorkspaceSet {
    fn default() -> Self {
        Self {
            r_arm: 6.5,
            z_min: 0.0,
            z_max: 6.0,
        }
    }
}

impl WorkspaceSet {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.r_arm > 0.0 && self.r_arm.is_finite()) {
            return Err(ConfigError::invalid("workspace r_arm must be positive"));
        }
        if !(self.z_min < self.z_max) {
            return Err(ConfigError::invalid("workspace requires z_min < z_max"));
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        p[0] * p[0] + p[1] * p[1] <= self.r_arm * self.r_arm && p[2] >= self.z_min && p[2] <= self.z_max
    }
}

/// Bounds on obstacle velocity and height measurement errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceBounds {
    pub delta_v: f64,
    pub delta_z: f64,
}

impl Default for DisturbanceBounds {
    fn default() -> Self {
        Self {
            delta_v: 0.5,
            delta_z: 0.1,
        }
    }
}

impl DisturbanceBounds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta_v >= 0.0 && self.delta_z >= 0.0) {
            return Err(ConfigError::invalid("disturbance bounds must be nonnegative"));
        }
        Ok(())
    }

    /// Lift to the three-dimensional set used for tightening.
    pub fn to_3d(&self, dt: f64) -> DisturbanceBounds3 {
        DisturbanceBounds3::new(self.delta_v, self.delta_z, dt)
    }
}

/// Product disturbance set in (radial displacement, velocity, height).
///
/// `delta_r` is derived from `delta_v`; both are kept so the set can be
/// reported in full even though the radial bound is the one that tightens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceBounds3 {
    pub delta_r: f64,
    pub delta_v: f64,
    pub delta_z: f64,
}

impl DisturbanceBounds3 {
    pub fn new(delta_v: f64, delta_z: f64, dt: f64) -> Self {
        Self {
            delta_r: radial_displacement(delta_v, dt),
            delta_v,
            delta_z,
        }
    }

    /// The 8 vertices of the box, as (w_r, w_v, w_z).
    pub fn vertices(&self) -> [[f64; 3]; 8] {
        let mut out = [[0.0; 3]; 8];
        for (i, v) in out.iter_mut().enumerate() {
            let sign = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
            *v = [sign(0) * self.delta_r, sign(1) * self.delta_v, sign(2) * self.delta_z];
        }
        out
    }
}

pub fn radial_displacement(delta_v: f64, dt: f64) -> f64 {
    delta_v * dt
}

/// Closed interval, or the empty set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    Empty,
    Closed { lo: f64, hi: f64 },
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            Interval::Closed { lo, hi }
        } else {
            Interval::Empty
        }
    }

    pub fn symmetric(r: f64) -> Self {
        Self::new(-r, r)
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Interval::Empty => false,
            Interval::Closed { lo, hi } => lo <= x && x <= hi,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Interval::Empty)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interval::Empty => write!(f, "∅"),
            Interval::Closed { lo, hi } => write!(f, "[{lo}, {hi}]"),
        }
    }
}

/// Box Pontryagin difference `a ⊖ b = {x : x + w ∈ a for all w ∈ b}`.
pub fn pontryagin_diff_interval(a: Interval, b: Interval) -> Interval {
    match (a, b) {
        (Interval::Empty, _) => Interval::Empty,
        // eroding by nothing leaves every point admissible; keep `a`
        (a, Interval::Empty) => a,
        (Interval::Closed { lo: alo, hi: ahi }, Interval::Closed { lo: blo, hi: bhi }) => {
            Interval::new(alo - blo, ahi - bhi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TighteningMode {
    /// One radial displacement at every prediction step.
    Constant,
    /// `k` accumulated displacements at prediction step `k`.
    #[default]
    Growing,
}

/// Per-step tightened constraints on the end-effector.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedWorkspace {
    pub radii: Vec<f64>,
    pub floors: Vec<f64>,
    pub z_max: f64,
}

impl TightenedWorkspace {
    /// The nominal set repeated over `steps` steps.
    pub fn nominal(ws: &WorkspaceSet, steps: usize) -> Self {
        Self {
            radii: vec![ws.r_arm; steps],
            floors: vec![ws.z_min; steps],
            z_max: ws.z_max,
        }
    }

    pub fn steps(&self) -> usize {
        self.radii.len()
    }

    pub fn contains(&self, k: usize, p: [f64; 3]) -> bool {
        let r = self.radii[k];
        p[0] * p[0] + p[1] * p[1] <= r * r && p[2] >= self.floors[k] && p[2] <= self.z_max
    }

    pub fn first_empty_step(&self) -> Option<usize> {
        (0..self.steps()).find(|&k| self.radii[k] <= 0.0 || self.floors[k] >= self.z_max)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TighteningError {
    #[error("tightened workspace is empty at prediction step {step} (radius {radius}, floor {floor}, ceiling {z_max})")]
    Empty {
        step: usize,
        radius: f64,
        floor: f64,
        z_max: f64,
    },
    #[error("dynamic floor has {got} entries, expected {expected}")]
    Length { got: usize, expected: usize },
}

/// Erode the nominal workspace by the disturbance set, one step at a time.
///
/// `zfloor_dynamic[k]` is the predicted height of interfering objects at step
/// `k`; entries below the static floor are raised to it. The slack variable is
/// not part of the set; the optimizer adds it.
pub fn tighten_workspace(
    nominal: &WorkspaceSet,
    dist: &DisturbanceBounds3,
    zfloor_dynamic: &[f64],
    horizon: usize,
    mode: TighteningMode,
) -> Result<TightenedWorkspace, TighteningError> {
    if zfloor_dynamic.len() != horizon {
        return Err(TighteningError::Length {
            got: zfloor_dynamic.len(),
            expected: horizon,
        });
    }
    let mut radii = Vec::with_capacity(horizon);
    let mut floors = Vec::with_capacity(horizon);
    for (k, &zf) in zfloor_dynamic.iter().enumerate() {
        let shrink = match mode {
            TighteningMode::Constant => dist.delta_r,
            TighteningMode::Growing => k as f64 * dist.delta_r,
        };
        let radial = pontryagin_diff_interval(
            Interval::new(0.0, nominal.r_arm),
            Interval::new(0.0, shrink),
        );
        let r = match radial {
            Interval::Closed { hi, .. } => hi.max(0.0),
            Interval::Empty => 0.0,
        };
        let floor = zf.max(nominal.z_min) + dist.delta_z;
        if r <= 0.0 || floor >= nominal.z_max {
            return Err(TighteningError::Empty {
                step: k,
                radius: r,
                floor,
                z_max: nominal.z_max,
            });
        }
        radii.push(r);
        floors.push(floor);
    }
    Ok(TightenedWorkspace {
        radii,
        floors,
        z_max: nominal.z_max,
    })
}

/// Outcome of a robust-feasibility query.
#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    /// A witness input sequence keeps every predicted end-effector position
    /// inside the tightened sets.
    Member(Vec<ControlInput>),
    NonMember,
    /// The solver did not converge; membership undecided.
    Unknown,
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Membership::Member(_) => "1",
            Membership::NonMember => "0",
            Membership::Unknown => "unknown",
        }
    }
}

/// Arm description needed by the feasibility test.
#[derive(Debug, Clone, Copy)]
pub struct ArmSpec {
    pub geometry: ArmGeometry,
    pub joint_limits: JointLimits,
    pub input_limits: InputLimits,
    pub dt: f64,
}

/// Is there an admissible input sequence that keeps the arm's predicted
/// end-effector inside `tightened` at every step, starting from `x`?
pub fn robust_feasible_membership(
    x: &JointState,
    arm: &ArmSpec,
    tightened: &TightenedWorkspace,
    options: &SolverOptions,
) -> Membership {
    if !arm.joint_limits.contains(x) || tightened.first_empty_step().is_some() {
        return Membership::NonMember;
    }
    // pure feasibility: only slack is penalized, any positive optimal slack
    // means the hard constraints cannot be met
    let weights = CostWeights {
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
        c4: 1.0,
        c_theta: 0.0,
    };
    let problem = RmpcProblem {
        initial: *x,
        horizon: tightened.steps(),
        dt: arm.dt,
        geometry: arm.geometry,
        joint_limits: arm.joint_limits,
        input_limits: arm.input_limits,
        tightened: tightened.clone(),
        weights,
        eps_max: 3.0,
        reference: None,
    };
    let sol = RmpcSolver::new(*options).solve(&problem, None);
    let tol = options.tol.max(1e-9);
    match sol.status {
        SolveStatus::Infeasible => Membership::NonMember,
        SolveStatus::MaxIter => Membership::Unknown,
        SolveStatus::Converged => {
            let slack = sol.slacks.iter().fold(0.0_f64, |a, &e| a.max(e));
            if slack <= tol && sol.constraint_violation <= tol {
                Membership::Member(sol.controls)
            } else {
                Membership::NonMember
            }
        }
    }
}

/// One grid node of [`invariant_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub state: JointState,
    pub membership: Membership,
}

#[derive(Debug, Clone)]
pub struct InvariantGrid {
    pub resolution: usize,
    pub lower: [f64; 4],
    pub upper: [f64; 4],
    pub cells: Vec<GridCell>,
}

impl InvariantGrid {
    fn axis_value(&self, axis: usize, i: usize) -> f64 {
        let r = self.resolution as f64 - 1.0;
        self.lower[axis] + (self.upper[axis] - self.lower[axis]) * i as f64 / r
    }

    /// Node nearest to `x` (per-axis rounding, clamped to the grid).
    pub fn nearest(&self, x: &JointState) -> &GridCell {
        let a = x.to_array();
        let n = self.resolution;
        let mut flat = 0;
        for axis in 0..4 {
            let span = self.upper[axis] - self.lower[axis];
            let t = if span > 0.0 { (a[axis] - self.lower[axis]) / span } else { 0.0 };
            let i = (t * (n as f64 - 1.0)).round().clamp(0.0, n as f64 - 1.0) as usize;
            flat = flat * n + i;
        }
        &self.cells[flat]
    }

    pub fn member_fraction(&self) -> f64 {
        let m = self.cells.iter().filter(|c| c.membership.is_member()).count();
        m as f64 / self.cells.len() as f64
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "alpha,beta,gamma,theta,member")?;
        for c in &self.cells {
            let s = c.state;
            writeln!(
                w,
                "{},{},{},{},{}",
                s.alpha,
                s.beta,
                s.gamma,
                s.theta,
                c.membership.label()
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), SimError> {
        let f = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| SimError::io(path, e))
    }
}

/// Evaluate robust feasibility on a regular grid over the joint limits under
/// the scenario's full disturbance budget and static floor.
pub fn invariant_grid(scenario: &Scenario, resolution: usize) -> Result<InvariantGrid, ConfigError> {
    if resolution < 2 {
        return Err(ConfigError::invalid("invariant grid resolution must be at least 2"));
    }
    let arm = scenario.arm_spec();
    let horizon = scenario.rmpc.horizon;
    let dist = scenario.disturbance.to_3d(scenario.dt);
    let floor = vec![scenario.workspace.z_min; horizon];
    let tightened = tighten_workspace(&scenario.workspace, &dist, &floor, horizon, scenario.rmpc.tightening)
        .map_err(|e| ConfigError::invalid(e.to_string()))?;

    let lower = scenario.arm.joint_limits.lower;
    let upper = scenario.arm.joint_limits.upper;
    let mut grid = InvariantGrid {
        resolution,
        lower,
        upper,
        cells: Vec::with_capacity(resolution.pow(4)),
    };
    let states: Vec<JointState> = (0..resolution.pow(4))
        .map(|flat| {
            let mut idx = [0usize; 4];
            let mut rem = flat;
            for axis in (0..4).rev() {
                idx[axis] = rem % resolution;
                rem /= resolution;
            }
            JointState::new(
                grid.axis_value(0, idx[0]),
                grid.axis_value(1, idx[1]),
                grid.axis_value(2, idx[2]),
                grid.axis_value(3, idx[3]),
            )
        })
        .collect();

    use rayon::prelude::*;
    let options = scenario.rmpc.solver;
    let cells: Vec<GridCell> = states
        .par_iter()
        .map(|s| GridCell {
            state: *s,
            membership: robust_feasible_membership(s, &arm, &tightened, &options),
        })
        .collect();
    grid.cells = cells;
    Ok(grid)
}
