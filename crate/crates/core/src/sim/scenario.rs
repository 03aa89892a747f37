use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arm_model::{self, ArmGeometry, InputLimits, JointLimits, JointState};
use crate::baseline_controller::BaselineConfig;
use crate::error::ConfigError;
use crate::geometry_sets::{tighten_workspace, ArmSpec, DisturbanceBounds, TighteningMode, WorkspaceSet};
use crate::nominal_planner::PhasePlan;
use crate::rmpc::{CostWeights, SolverOptions};
use crate::supervisor::SupervisorConfig;
use crate::world::WorldConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmConfig {
    pub geometry: ArmGeometry,
    pub joint_limits: JointLimits,
    pub input_limits: InputLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmpcConfig {
    pub horizon: usize,
    pub weights: CostWeights,
    /// Upper bound on the height-floor slack, m.
    pub eps_max: f64,
    pub tightening: TighteningMode,
    pub solver: SolverOptions,
}

impl Default for RmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            weights: CostWeights::default(),
            eps_max: 3.0,
            tightening: TighteningMode::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Pick-and-place cycles that count as task completion.
    pub cycles: u32,
    /// Hard stop, s.
    pub max_time: f64,
    /// Defaults to the first phase target.
    pub initial_state: Option<JointState>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cycles: 3,
            max_time: 120.0,
            initial_state: None,
        }
    }
}

/// Everything a run needs. Loaded from a JSON document carrying `"schema": 1`;
/// omitted sections take their defaults, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    /// Control period, s.
    pub dt: f64,
    pub arm: ArmConfig,
    pub workspace: WorkspaceSet,
    pub disturbance: DisturbanceBounds,
    pub rmpc: RmpcConfig,
    pub supervisor: SupervisorConfig,
    pub baseline: BaselineConfig,
    pub world: WorldConfig,
    pub plan: PhasePlan,
    pub run: RunConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            name: "default".to_string(),
            dt: 0.1,
            arm: ArmConfig::default(),
            workspace: WorkspaceSet::default(),
            disturbance: DisturbanceBounds::default(),
            rmpc: RmpcConfig::default(),
            supervisor: SupervisorConfig::default(),
            baseline: BaselineConfig::default(),
            world: WorldConfig::default(),
            plan: PhasePlan::default(),
            run: RunConfig::default(),
        }
    }
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: Option<u32>,
}

impl Scenario {
    /// Parse and validate a scenario document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, Path::new("<memory>"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let parse_err = |source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        };
        let probe: SchemaProbe = serde_json::from_str(text).map_err(parse_err)?;
        match probe.schema {
            None => return Err(ConfigError::invalid("scenario is missing the \"schema\" field")),
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(ConfigError::Schema(v)),
        }
        let scenario: Scenario = serde_json::from_str(text).map_err(parse_err)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn arm_spec(&self) -> ArmSpec {
        ArmSpec {
            geometry: self.arm.geometry,
            joint_limits: self.arm.joint_limits,
            input_limits: self.arm.input_limits,
            dt: self.dt,
        }
    }

    pub fn initial_state(&self) -> JointState {
        self.run
            .initial_state
            .unwrap_or_else(|| self.plan.phases.first().map(|p| p.target).unwrap_or_default())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::invalid("dt must be positive"));
        }
        self.arm.geometry.validate()?;
        self.arm.joint_limits.validate()?;
        self.arm.input_limits.validate()?;
        self.workspace.validate()?;
        self.disturbance.validate()?;
        self.rmpc.weights.validate()?;
        if self.rmpc.horizon == 0 {
            return Err(ConfigError::invalid("rmpc horizon must be at least 1"));
        }
        if !(self.rmpc.eps_max > 0.0) {
            return Err(ConfigError::invalid("eps_max must be positive"));
        }
        if !(self.rmpc.solver.tol > 0.0 && self.rmpc.solver.max_iter > 0) {
            return Err(ConfigError::invalid("solver needs a positive tolerance and iteration cap"));
        }
        self.supervisor.validate()?;
        self.baseline.validate()?;
        self.world.validate()?;
        self.plan.validate(&self.arm.joint_limits)?;
        if !(self.run.cycles > 0 && self.run.max_time > 0.0) {
            return Err(ConfigError::invalid("run needs at least one cycle and a positive max_time"));
        }

        let reach = self.arm.geometry.reach();
        if reach > self.workspace.r_arm + 1e-12 {
            return Err(ConfigError::invalid(format!(
                "arm reach {reach} exceeds workspace radius {}",
                self.workspace.r_arm
            )));
        }
        if self.supervisor.d_deact >= self.world.r_detect {
            return Err(ConfigError::invalid("d_deact must be smaller than r_detect"));
        }
        for phase in &self.plan.phases {
            let p = arm_model::end_effector(&phase.target, &self.arm.geometry);
            if !self.workspace.contains(p) {
                return Err(ConfigError::invalid(format!(
                    "phase {} target puts the end-effector outside the workspace",
                    phase.name
                )));
            }
        }
        let x0 = self.initial_state();
        if !self.arm.joint_limits.contains(&x0) {
            return Err(ConfigError::invalid("initial state outside joint limits"));
        }
        let floor = vec![self.workspace.z_min; self.rmpc.horizon];
        tighten_workspace(
            &self.workspace,
            &self.disturbance.to_3d(self.dt),
            &floor,
            self.rmpc.horizon,
            self.rmpc.tightening,
        )
        .map_err(|e| ConfigError::invalid(format!("disturbance budget too large: {e}")))?;
        Ok(())
    }
}
