//! Potential-field comparison controller with three distance regions.
//!
//! Far from every obstacle the nominal plan runs at `v_nominal`. Inside the
//! active band the nominal rates are scaled down linearly with distance and a
//! base-rotation bias pushes the end-effector's azimuth away from the nearest
//! obstacle. Inside the critical radius the arm stops.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arm_model::{self, clamp_input, ControlInput, JointState};
use crate::error::ConfigError;
use crate::nominal_planner::{nominal_control, PhaseProgress};
use crate::sim::Scenario;
use crate::world::Measurement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Outer radius of the active region, m.
    pub r2: f64,
    /// Critical radius, m.
    pub r3: f64,
    /// Repulsion gain, m^3/s.
    pub k: f64,
    /// Speed scale in the safe region, (0, 1].
    pub v_nominal: f64,
    /// Base-rate bias per unit tangential force, rad/m.
    pub theta_gain: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            r2: 3.0,
            r3: 1.5,
            k: 1.0,
            v_nominal: 1.0,
            theta_gain: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.r3 > 0.0 && self.r2 > self.r3) {
            return Err(ConfigError::invalid("baseline requires r2 > r3 > 0"));
        }
        if !(self.k > 0.0) {
            return Err(ConfigError::invalid("baseline repulsion gain must be positive"));
        }
        if !(self.v_nominal > 0.0 && self.v_nominal <= 1.0) {
            return Err(ConfigError::invalid("baseline v_nominal must be in (0, 1]"));
        }
        if !(self.theta_gain >= 0.0 && self.theta_gain.is_finite()) {
            return Err(ConfigError::invalid("baseline theta_gain must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Safe,
    Active,
    Critical,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::Safe => "safe",
            Region::Active => "active",
            Region::Critical => "critical",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn region(d: f64, cfg: &BaselineConfig) -> Region {
    if d > cfg.r2 {
        Region::Safe
    } else if d >= cfg.r3 {
        Region::Active
    } else {
        Region::Critical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("robot and obstacle positions coincide")]
pub struct DegenerateForce;

/// `-k (p_r - p_h) / |p_r - p_h|^3`.
pub fn repulsive_force(p_r: [f64; 2], p_h: [f64; 2], k: f64) -> Result<[f64; 2], DegenerateForce> {
    let dx = p_r[0] - p_h[0];
    let dy = p_r[1] - p_h[1];
    let d = dx.hypot(dy);
    if d == 0.0 {
        return Err(DegenerateForce);
    }
    let s = -k / (d * d * d);
    Ok([s * dx, s * dy])
}

/// Linear speed factor across the active band: 0 at `r3`, 1 at `r2`.
pub fn speed_factor(d: f64, cfg: &BaselineConfig) -> f64 {
    ((d - cfg.r3) / (cfg.r2 - cfg.r3)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub input: ControlInput,
    pub region: Region,
    pub progress: PhaseProgress,
    /// Planar clearance from the end-effector to the nearest obstacle footprint.
    pub d_min: f64,
    pub force: Option<[f64; 2]>,
}

pub fn baseline_step(
    state: &JointState,
    progress: &PhaseProgress,
    measurements: &[Measurement],
    scenario: &Scenario,
) -> BaselineOutput {
    let cfg = &scenario.baseline;
    let geom = &scenario.arm.geometry;
    let limits = &scenario.arm.input_limits;
    let p4 = arm_model::end_effector(state, geom);
    let pr = [p4[0], p4[1]];

    let nearest = measurements
        .iter()
        .map(|m| {
            let d = ((m.position[0] - pr[0]).hypot(m.position[1] - pr[1]) - m.radius).max(0.0);
            (d, m)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let d_min = nearest.map(|(d, _)| d).unwrap_or(f64::INFINITY);

    let reg = region(d_min, cfg);
    if reg == Region::Critical {
        return BaselineOutput {
            input: ControlInput::ZERO,
            region: reg,
            progress: *progress,
            d_min,
            force: None,
        };
    }

    let (u_nom, next) = nominal_control(state, progress, &scenario.plan, limits, scenario.dt);
    if reg == Region::Safe {
        return BaselineOutput {
            input: clamp_input(&u_nom.scale(cfg.v_nominal), limits),
            region: reg,
            progress: next,
            d_min,
            force: None,
        };
    }

    let (_, m) = nearest.expect("active region implies an obstacle");
    let force = match repulsive_force(pr, m.position, cfg.k) {
        Ok(f) => f,
        Err(_) => {
            return BaselineOutput {
                input: ControlInput::ZERO,
                region: Region::Critical,
                progress: *progress,
                d_min,
                force: None,
            }
        }
    };
    let mut u = u_nom.scale(speed_factor(d_min, cfg)).to_array();
    // the formula's vector points at the obstacle; steer along its opposite
    let (rho, _) = arm_model::radial_height(state, geom);
    if rho.abs() > 1e-9 {
        let tangent = [-state.theta.sin() * rho.signum(), state.theta.cos() * rho.signum()];
        let along = -(force[0] * tangent[0] + force[1] * tangent[1]);
        u[3] += cfg.theta_gain * along;
    }
    BaselineOutput {
        input: clamp_input(&ControlInput::from(u), limits),
        region: reg,
        progress: next,
        d_min,
        force: Some(force),
    }
}
