use std::collections::BTreeMap;
use std::path::Path;

use crate::error::SimError;

use super::log::{read_obstacles, ObstacleRow, TrajectoryLog};

/// Write `z4_vs_t.csv` and `xy_topdown.csv` for external plotting.
/// `xy_topdown.csv` has one line per (step, obstacle), or one line with empty
/// obstacle columns for steps without obstacles.
pub fn emit_plots(log: &TrajectoryLog, obstacles: &[ObstacleRow], out_dir: &Path) -> Result<(), SimError> {
    if log.is_empty() {
        return Err(SimError::Runtime("trajectory log is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| SimError::io(out_dir, e))?;

    let path = out_dir.join("z4_vs_t.csv");
    let file = std::fs::File::create(&path).map_err(|e| SimError::io(&path, e))?;
    let mut wr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    wr.write_record(["t", "z4", "zfloor", "mode"])?;
    for r in &log.rows {
        wr.write_record([
            format!("{}", r.t),
            format!("{}", r.p4[2]),
            r.z_floor.map(|z| format!("{z}")).unwrap_or_default(),
            r.mode.clone(),
        ])?;
    }
    wr.flush().map_err(|e| SimError::io(&path, e))?;

    // obstacle rows share the exact `t` values of the log they came from
    let mut by_t: BTreeMap<u64, Vec<&ObstacleRow>> = BTreeMap::new();
    for o in obstacles {
        by_t.entry(o.t.to_bits()).or_default().push(o);
    }
    let path = out_dir.join("xy_topdown.csv");
    let file = std::fs::File::create(&path).map_err(|e| SimError::io(&path, e))?;
    let mut wr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    wr.write_record(["t", "x4", "y4", "obs_id", "obs_x", "obs_y"])?;
    for r in &log.rows {
        let head = [format!("{}", r.t), format!("{}", r.p4[0]), format!("{}", r.p4[1])];
        match by_t.get(&r.t.to_bits()) {
            Some(obs) => {
                for o in obs {
                    wr.write_record(head.iter().cloned().chain([
                        o.id.to_string(),
                        format!("{}", o.x),
                        format!("{}", o.y),
                    ]))?;
                }
            }
            None => wr.write_record(head.iter().cloned().chain([String::new(), String::new(), String::new()]))?,
        }
    }
    wr.flush().map_err(|e| SimError::io(&path, e))?;
    Ok(())
}

/// File-based variant: reads the trajectory and, when present, the
/// `obstacles.csv` written next to it.
pub fn emit_plots_from_file(log_path: &Path, out_dir: &Path) -> Result<(), SimError> {
    let log = TrajectoryLog::load(log_path)?;
    let obs_path = log_path.with_file_name("obstacles.csv");
    let obstacles = if obs_path.exists() {
        let f = std::fs::File::open(&obs_path).map_err(|e| SimError::io(&obs_path, e))?;
        read_obstacles(std::io::BufReader::new(f))?
    } else {
        Vec::new()
    };
    emit_plots(&log, &obstacles, out_dir)
}
