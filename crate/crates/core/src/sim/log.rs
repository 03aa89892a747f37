use std::io::{Read, Write};
use std::path::Path;

use crate::error::SimError;

/// Column order of the trajectory CSV.
pub const TRAJECTORY_HEADER: [&str; 18] = [
    "t",
    "mode",
    "alpha",
    "beta",
    "gamma",
    "theta",
    "u1",
    "u2",
    "u3",
    "u4",
    "x4",
    "y4",
    "z4",
    "d_min",
    "z_floor",
    "eps_max_step",
    "solve_time_s",
    "switch_event",
];

/// Columns holding wall-clock measurements; excluded from determinism checks.
pub const WALL_CLOCK_COLUMNS: [&str; 1] = ["solve_time_s"];

pub const OBSTACLE_HEADER: [&str; 5] = ["t", "id", "x", "y", "height"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub mode: String,
    pub state: [f64; 4],
    pub input: [f64; 4],
    pub p4: [f64; 3],
    /// `+inf` when nothing is detected.
    pub d_min: f64,
    pub z_floor: Option<f64>,
    pub eps_max_step: Option<f64>,
    pub solve_time_s: Option<f64>,
    pub switch_event: Option<String>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl TrajectoryRow {
    fn record(&self) -> Vec<String> {
        let mut r = Vec::with_capacity(TRAJECTORY_HEADER.len());
        r.push(num(self.t));
        r.push(self.mode.clone());
        r.extend(self.state.iter().map(|v| num(*v)));
        r.extend(self.input.iter().map(|v| num(*v)));
        r.extend(self.p4.iter().map(|v| num(*v)));
        r.push(num(self.d_min));
        r.push(opt(self.z_floor));
        r.push(opt(self.eps_max_step));
        r.push(opt(self.solve_time_s));
        r.push(self.switch_event.clone().unwrap_or_default());
        r
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self, SimError> {
        let bad = |col: usize| SimError::Runtime(format!("trajectory line {line}: bad value in column {}", TRAJECTORY_HEADER[col]));
        let f = |col: usize| -> Result<f64, SimError> { rec.get(col).and_then(|s| s.parse().ok()).ok_or_else(|| bad(col)) };
        let o = |col: usize| -> Result<Option<f64>, SimError> {
            match rec.get(col) {
                Some("") => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| bad(col)),
                None => Err(bad(col)),
            }
        };
        Ok(Self {
            t: f(0)?,
            mode: rec.get(1).ok_or_else(|| bad(1))?.to_string(),
            state: [f(2)?, f(3)?, f(4)?, f(5)?],
            input: [f(6)?, f(7)?, f(8)?, f(9)?],
            p4: [f(10)?, f(11)?, f(12)?],
            d_min: f(13)?,
            z_floor: o(14)?,
            eps_max_step: o(15)?,
            solve_time_s: o(16)?,
            switch_event: rec.get(17).filter(|s| !s.is_empty()).map(str::to_string),
        })
    }
}

/// Per-step record of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), SimError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(TRAJECTORY_HEADER)?;
        for row in &self.rows {
            wr.write_record(row.record())?;
        }
        wr.flush().map_err(|e| SimError::io("<trajectory>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv(r: impl Read) -> Result<Self, SimError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        if header.iter().ne(TRAJECTORY_HEADER.iter().copied()) {
            return Err(SimError::Runtime("trajectory header does not match the expected columns".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            rows.push(TrajectoryRow::from_record(&rec?, i + 2)?);
        }
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let file = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let file = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// True obstacle state at one logged instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleRow {
    pub t: f64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

pub fn write_obstacles(rows: &[ObstacleRow], w: impl Write) -> Result<(), SimError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(OBSTACLE_HEADER)?;
    for r in rows {
        wr.write_record([num(r.t), r.id.to_string(), num(r.x), num(r.y), num(r.height)])?;
    }
    wr.flush().map_err(|e| SimError::io("<obstacles>", e))?;
    Ok(())
}

pub fn read_obstacles(r: impl Read) -> Result<Vec<ObstacleRow>, SimError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let parse = |i: usize| -> Result<f64, SimError> {
            get(i)
                .parse()
                .map_err(|_| SimError::Runtime(format!("bad obstacle value {:?}", get(i))))
        };
        out.push(ObstacleRow {
            t: parse(0)?,
            id: get(1)
                .parse()
                .map_err(|_| SimError::Runtime(format!("bad obstacle id {:?}", get(1))))?,
            x: parse(2)?,
            y: parse(3)?,
            height: parse(4)?,
        });
    }
    Ok(out)
}

/// Replace the wall-clock columns of a trajectory CSV with a fixed marker so
/// that two logs of the same run can be compared byte for byte.
pub fn mask_wall_clock(csv_text: &str) -> String {
    let cols: Vec<usize> = WALL_CLOCK_COLUMNS
        .iter()
        .filter_map(|c| TRAJECTORY_HEADER.iter().position(|h| h == c))
        .collect();
    let mut out = String::with_capacity(csv_text.len());
    for (i, line) in csv_text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let fields: Vec<&str> = line
                .split(',')
                .enumerate()
                .map(|(j, f)| if cols.contains(&j) && !f.is_empty() { "*" } else { f })
                .collect();
            out.push_str(&fields.join(","));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> TrajectoryRow {
        TrajectoryRow {
            t,
            mode: "rmpc".into(),
            state: [0.1, -0.2, 0.3, 1.0],
            input: [0.0, 1.0, -1.0, 0.5],
            p4: [1.0, 2.0, 3.0],
            d_min: f64::INFINITY,
            z_floor: Some(4.5),
            eps_max_step: Some(0.0),
            solve_time_s: Some(0.0123),
            switch_event: Some("nominal->rmpc".into()),
        }
    }

    #[test]
    fn header_order_is_pinned() {
        let log = TrajectoryLog { rows: vec![] };
        assert_eq!(
            log.to_csv_string(),
            "t,mode,alpha,beta,gamma,theta,u1,u2,u3,u4,x4,y4,z4,d_min,z_floor,eps_max_step,solve_time_s,switch_event\n"
        );
    }

    #[test]
    fn csv_round_trip() {
        let mut r2 = row(0.1);
        r2.z_floor = None;
        r2.eps_max_step = None;
        r2.solve_time_s = None;
        r2.switch_event = None;
        r2.d_min = 0.75;
        let log = TrajectoryLog { rows: vec![row(0.0), r2] };
        let text = log.to_csv_string();
        assert!(text.contains(",inf,"));
        let back = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn masking_hides_only_wall_clock() {
        let log = TrajectoryLog { rows: vec![row(0.0)] };
        let mut other = log.clone();
        other.rows[0].solve_time_s = Some(0.5);
        assert_ne!(log.to_csv_string(), other.to_csv_string());
        assert_eq!(mask_wall_clock(&log.to_csv_string()), mask_wall_clock(&other.to_csv_string()));
    }
}
