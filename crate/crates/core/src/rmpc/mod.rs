//! Finite-horizon robust MPC over the Euler-discretized arm.
//!
//! The problem minimizes a weighted L1 norm of the joint rates (optionally
//! measured relative to a reference input sequence) plus a heavily weighted
//! slack on the height floor, subject to per-step tightened end-effector
//! constraints, joint limits and input boxes:
//!
//! ```txt
//!   min  sum_k  c1|u_k1 - r_k1| + c2|u_k2 - r_k2| + c3|u_k3 - r_k3| + c_theta|u_k4 - r_k4| + c4 eps_k
//!   s.t. x_{k+1} = x_k + dt u_k
//!        rho(x_{k+1})^2 <= R_k^2
//!        z(x_{k+1}) >= zfloor_k - eps_k
//!        z(x_{k+1}) <= z_max
//!        joint limits on x_{k+1},  u_k in U,  0 <= eps_k <= eps_max
//! ```
//!
//! With no reference the objective is the plain rate cost.

pub mod qp;
mod sqp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arm_model::{
    self, radial_height_derivatives, ArmGeometry, ControlInput, InputLimits, JointLimits, JointState,
};
use crate::error::ConfigError;
use crate::geometry_sets::TightenedWorkspace;

/// Weights of the L1 rate cost and the slack penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c_theta: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 3.0,
            c3: 5.0,
            c4: 100.0,
            c_theta: 0.0,
        }
    }
}

impl CostWeights {
    /// Per-axis rate weights in joint order.
    pub fn rate_weights(&self) -> [f64; 4] {
        [self.c1, self.c2, self.c3, self.c_theta]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.c1, self.c2, self.c3, self.c4, self.c_theta];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ConfigError::invalid("cost weights must be finite and nonnegative"));
        }
        let max_rate = self.c1.max(self.c2).max(self.c3);
        if self.c4 < 10.0 * max_rate {
            log::warn!(
                "slack penalty c4={} is not much larger than the rate weights (max {})",
                self.c4,
                max_rate
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stationarity and constraint-violation tolerance.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 60,
            tol: 1e-6,
        }
    }
}

/// Weighted L1 rate cost plus slack penalty, with zero reference.
pub fn rmpc_cost(controls: &[ControlInput], slacks: &[f64], weights: &CostWeights) -> f64 {
    rmpc_tracking_cost(controls, None, slacks, weights)
}

/// Rate cost measured against an optional reference input sequence.
pub fn rmpc_tracking_cost(
    controls: &[ControlInput],
    reference: Option<&[ControlInput]>,
    slacks: &[f64],
    weights: &CostWeights,
) -> f64 {
    assert_eq!(controls.len(), slacks.len(), "controls and slacks must have equal length");
    let aux = epigraph_aux(controls, reference);
    epigraph_objective(&aux, slacks, weights)
}

/// Smallest epigraph variables `s >= |u - r|` for each rate.
pub fn epigraph_aux(controls: &[ControlInput], reference: Option<&[ControlInput]>) -> Vec<[f64; 4]> {
    controls
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let u = u.to_array();
            let r = reference.map(|r| r[k].to_array()).unwrap_or([0.0; 4]);
            [
                (u[0] - r[0]).abs(),
                (u[1] - r[1]).abs(),
                (u[2] - r[2]).abs(),
                (u[3] - r[3]).abs(),
            ]
        })
        .collect()
}

/// The smooth (linear) objective the solver sees, in terms of epigraph variables.
pub fn epigraph_objective(aux: &[[f64; 4]], slacks: &[f64], weights: &CostWeights) -> f64 {
    let w = weights.rate_weights();
    aux.iter()
        .zip(slacks)
        .map(|(s, e)| w[0] * s[0] + w[1] * s[1] + w[2] * s[2] + w[3] * s[3] + weights.c4 * e)
        .sum()
}

/// One instance of the receding-horizon problem.
#[derive(Debug, Clone)]
pub struct RmpcProblem {
    pub initial: JointState,
    pub horizon: usize,
    pub dt: f64,
    pub geometry: ArmGeometry,
    pub joint_limits: JointLimits,
    pub input_limits: InputLimits,
    pub tightened: TightenedWorkspace,
    pub weights: CostWeights,
    pub eps_max: f64,
    /// Input sequence the rate cost is measured against (`None` = zero).
    pub reference: Option<Vec<ControlInput>>,
}

/// Nonlinear constraint rows per prediction step.
pub const ROWS_PER_STEP: usize = 3;

impl RmpcProblem {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(ConfigError::invalid("horizon must be at least 1"));
        }
        if self.tightened.steps() != self.horizon {
            return Err(ConfigError::invalid(format!(
                "tightened workspace has {} steps, horizon is {}",
                self.tightened.steps(),
                self.horizon
            )));
        }
        if !(self.eps_max > 0.0) {
            return Err(ConfigError::invalid("eps_max must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(ConfigError::invalid("dt must be positive"));
        }
        if let Some(r) = &self.reference {
            if r.len() != self.horizon {
                return Err(ConfigError::invalid("reference length must equal the horizon"));
            }
        }
        self.weights.validate()?;
        self.input_limits.validate()?;
        self.joint_limits.validate()
    }

    pub fn reference_at(&self, k: usize) -> [f64; 4] {
        self.reference
            .as_ref()
            .map(|r| r[k].to_array())
            .unwrap_or([0.0; 4])
    }

    /// Euler rollout, `horizon + 1` states starting with the initial one.
    pub fn rollout(&self, controls: &[ControlInput]) -> Vec<JointState> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        let mut x = self.initial;
        states.push(x);
        for u in controls {
            x = arm_model::step(&x, u, self.dt);
            states.push(x);
        }
        states
    }

    /// Nonlinear constraint values `c <= 0`, three per step:
    /// radial, height floor (with slack), height ceiling.
    pub fn constraint_values(&self, controls: &[ControlInput], slacks: &[f64]) -> Vec<f64> {
        let states = self.rollout(controls);
        let mut out = Vec::with_capacity(ROWS_PER_STEP * self.horizon);
        for k in 0..self.horizon {
            let (rho, z) = arm_model::radial_height(&states[k + 1], &self.geometry);
            let r = self.tightened.radii[k];
            out.push(rho * rho - r * r);
            out.push(self.tightened.floors[k] - slacks[k] - z);
            out.push(z - self.tightened.z_max);
        }
        out
    }

    /// Analytic Jacobian of [`Self::constraint_values`] with respect to the
    /// stacked controls (`4 * horizon` columns, step-major) followed by the
    /// slacks (`horizon` columns).
    pub fn constraint_jacobian(&self, controls: &[ControlInput]) -> DMatrix<f64> {
        let np = self.horizon;
        let states = self.rollout(controls);
        let mut jac = DMatrix::zeros(ROWS_PER_STEP * np, 5 * np);
        for k in 0..np {
            let d = radial_height_derivatives(&states[k + 1], &self.geometry);
            for j in 0..=k {
                for a in 0..3 {
                    jac[(3 * k, 4 * j + a)] = 2.0 * d.rho * d.d_rho[a] * self.dt;
                    jac[(3 * k + 1, 4 * j + a)] = -d.d_z[a] * self.dt;
                    jac[(3 * k + 2, 4 * j + a)] = d.d_z[a] * self.dt;
                }
            }
            jac[(3 * k + 1, 4 * np + k)] = -1.0;
        }
        jac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// No admissible input sequence exists even with full slack (certified).
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct RmpcSolution {
    pub controls: Vec<ControlInput>,
    pub slacks: Vec<f64>,
    /// `horizon + 1` states, the exact Euler rollout of `controls`.
    pub states: Vec<JointState>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Wall-clock seconds; not deterministic.
    pub solve_time: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
}

impl RmpcSolution {
    /// Receding-horizon warm start: drop the applied input, repeat the last.
    pub fn shifted(&self) -> Vec<ControlInput> {
        let mut out: Vec<ControlInput> = self.controls.iter().skip(1).copied().collect();
        if let Some(last) = self.controls.last() {
            out.push(*last);
        }
        out
    }

    pub fn first_input(&self) -> ControlInput {
        self.controls.first().copied().unwrap_or(ControlInput::ZERO)
    }

    pub fn max_slack(&self) -> f64 {
        self.slacks.iter().fold(0.0, |a: f64, &e| a.max(e))
    }
}

/// Owns solver settings; one instance per controller.
#[derive(Debug, Clone)]
pub struct RmpcSolver {
    options: SolverOptions,
}

impl RmpcSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Solve from a warm start (an input sequence of length `horizon`), or
    /// from the reference (zero when absent).
    pub fn solve(&mut self, problem: &RmpcProblem, warm: Option<&[ControlInput]>) -> RmpcSolution {
        sqp::solve(problem, warm, &self.options)
    }
}

/// One-shot convenience wrapper around [`RmpcSolver`]; a prior solution is
/// shifted by one step before use.
pub fn solve_rmpc(
    problem: &RmpcProblem,
    warm: Option<&RmpcSolution>,
    options: &SolverOptions,
) -> RmpcSolution {
    let shifted = warm.map(|w| w.shifted());
    sqp::solve(problem, shifted.as_deref(), options)
}
