//! Scenario configuration, the fixed-step run loop, metrics, logs, batch
//! execution and plot-data export.

mod batch;
mod log;
mod plots;
mod run;
mod scenario;

pub use batch::{batch, numeric_fields, parse_seeds, BatchReport, BatchRun, ControllerSummary, FieldStats};
pub use log::{
    mask_wall_clock, read_obstacles, write_obstacles, ObstacleRow, TrajectoryLog, TrajectoryRow, OBSTACLE_HEADER,
    TRAJECTORY_HEADER, WALL_CLOCK_COLUMNS,
};
pub use plots::{emit_plots, emit_plots_from_file};
pub use run::{cylinder_separation, is_stop, run, ControllerKind, RunMetrics, RunOutput};
pub use scenario::{ArmConfig, RmpcConfig, RunConfig, Scenario, SCHEMA_VERSION};
