//! Robust model predictive control for a 4-DOF pick-and-place arm sharing its
//! workspace with moving, height-limited obstacles.
//!
//! The crate is organized bottom-up:
//!
//! - [`arm_model`]: forward kinematics and Euler joint-rate dynamics
//! - [`geometry_sets`]: workspace, disturbance sets, constraint tightening, robust feasibility
//! - [`world`]: obstacle motion, noisy measurement, constant-velocity prediction
//! - [`nominal_planner`]: the scripted pick-and-place cycle
//! - [`rmpc`]: the receding-horizon optimal control problem and its solver
//! - [`supervisor`]: switching between nominal tracking and robust MPC
//! - [`baseline_controller`]: a potential-field comparison controller
//! - [`sim`]: scenarios, the run loop, logs, metrics and batches

pub mod arm_model;
pub mod baseline_controller;
pub mod error;
pub mod geometry_sets;
pub mod nominal_planner;
pub mod rmpc;
pub mod sim;
pub mod supervisor;
pub mod world;

pub use error::{ConfigError, SimError};
pub use sim::Scenario;
