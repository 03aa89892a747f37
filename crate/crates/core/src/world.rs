//! Moving cylindrical obstacles: generation, true motion, bounded-noise
//! sensing and constant-velocity prediction over the horizon.
//!
//! Randomness comes from ChaCha8 streams seeded per run: stream 0 drives
//! spawning and position jitter, stream 1 drives sensor noise. ChaCha output
//! is specified bit-for-bit, so a seed reproduces the same world on every
//! platform.

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry_sets::DisturbanceBounds;

/// A vertical cylinder moving on a straight line at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub p0: [f64; 2],
    pub speed: f64,
    pub heading: f64,
    pub height: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub spawn_time: f64,
}

fn default_radius() -> f64 {
    0.3
}

impl Obstacle {
    pub fn validate(&self, r_detect: f64) -> Result<(), ConfigError> {
        if !(self.height > 0.0) {
            return Err(ConfigError::invalid("obstacle height must be positive"));
        }
        if !(self.speed >= 0.0) {
            return Err(ConfigError::invalid("obstacle speed must be nonnegative"));
        }
        if !(self.radius > 0.0) {
            return Err(ConfigError::invalid("obstacle radius must be positive"));
        }
        if self.p0[0].hypot(self.p0[1]) > r_detect + 1e-9 {
            return Err(ConfigError::invalid(format!(
                "obstacle starts at {:?}, outside the detectable circle of radius {r_detect}",
                self.p0
            )));
        }
        Ok(())
    }

    pub fn velocity(&self) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [self.speed * c, self.speed * s]
    }
}

pub fn true_position(obs: &Obstacle, t: f64) -> [f64; 2] {
    let tau = t - obs.spawn_time;
    let (s, c) = obs.heading.sin_cos();
    [obs.p0[0] + obs.speed * tau * c, obs.p0[1] + obs.speed * tau * s]
}

/// Noisy observation of one obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub id: usize,
    pub position: [f64; 2],
    pub speed: f64,
    pub heading: f64,
    pub height: f64,
    pub radius: f64,
    pub stamp: f64,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Measure `obs` at time `t`. Position, heading and footprint are exact;
/// speed and height carry uniform noise within the disturbance bounds.
pub fn measure(obs: &Obstacle, id: usize, t: f64, rng: &mut impl Rng, bounds: &DisturbanceBounds) -> Measurement {
    let w_v = uniform(rng, -bounds.delta_v, bounds.delta_v);
    let w_z = uniform(rng, -bounds.delta_z, bounds.delta_z);
    Measurement {
        id,
        position: true_position(obs, t),
        // clamping toward the truth keeps |error| within the bound
        speed: (obs.speed + w_v).max(0.0),
        heading: obs.heading,
        height: obs.height + w_z,
        radius: obs.radius,
        stamp: t,
    }
}

/// Constant-velocity extrapolation of a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedPath {
    pub id: usize,
    pub positions: Vec<[f64; 2]>,
    pub heights: Vec<f64>,
    pub stamps: Vec<f64>,
    pub radius: f64,
}

/// Positions at `stamp + i dt` for `i = 1..=horizon`.
pub fn predict_path(m: &Measurement, horizon: usize, dt: f64) -> PredictedPath {
    let (s, c) = m.heading.sin_cos();
    let mut positions = Vec::with_capacity(horizon);
    let mut stamps = Vec::with_capacity(horizon);
    for i in 1..=horizon {
        let tau = i as f64 * dt;
        positions.push([m.position[0] + m.speed * tau * c, m.position[1] + m.speed * tau * s]);
        stamps.push(m.stamp + tau);
    }
    PredictedPath {
        id: m.id,
        positions,
        heights: vec![m.height; horizon],
        stamps,
        radius: m.radius,
    }
}

/// Per-step height of the tallest obstacle predicted within reach of the
/// base (`r_arm` plus the obstacle footprint); `z_min` where none interferes.
pub fn interfering_floor(paths: &[PredictedPath], r_arm: f64, z_min: f64, horizon: usize) -> Vec<f64> {
    let mut floor = vec![z_min; horizon];
    for path in paths {
        for (k, f) in floor.iter_mut().enumerate().take(path.positions.len()) {
            let p = path.positions[k];
            if p[0].hypot(p[1]) <= r_arm + path.radius {
                *f = f.max(path.heights[k]);
            }
        }
    }
    floor
}

/// Random arrivals on the detection circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpawnConfig {
    /// Mean arrivals per second; 0 disables random spawning.
    pub rate: f64,
    pub speed_range: [f64; 2],
    pub height_range: [f64; 2],
    pub radius: f64,
    /// Maximum deviation of the heading from the inward normal.
    pub heading_spread: f64,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self {
            rate: 0.0,
            speed_range: [0.3, 0.8],
            height_range: [2.8, 4.4],
            radius: 0.3,
            heading_spread: FRAC_PI_4,
        }
    }
}

impl SpawnConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.rate >= 0.0
            && self.speed_range[0] >= 0.0
            && self.speed_range[0] <= self.speed_range[1]
            && self.height_range[0] > 0.0
            && self.height_range[0] <= self.height_range[1]
            && self.radius > 0.0
            && (0.0..=FRAC_PI_4 * 2.0).contains(&self.heading_spread);
        if ok {
            Ok(())
        } else {
            Err(ConfigError::invalid("invalid spawn configuration"))
        }
    }
}

/// Draw one obstacle on the boundary of the detection circle, heading into it.
pub fn spawn_obstacle(rng: &mut impl Rng, cfg: &SpawnConfig, r_detect: f64, t: f64) -> Obstacle {
    let phi = uniform(rng, 0.0, TAU);
    let dev = uniform(rng, -cfg.heading_spread, cfg.heading_spread);
    let speed = uniform(rng, cfg.speed_range[0], cfg.speed_range[1]);
    let height = uniform(rng, cfg.height_range[0], cfg.height_range[1]);
    let heading = (phi + std::f64::consts::PI + dev).rem_euclid(TAU);
    Obstacle {
        p0: [r_detect * phi.cos(), r_detect * phi.sin()],
        speed,
        heading,
        height,
        radius: cfg.radius,
        spawn_time: t,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub r_detect: f64,
    /// Obstacles present from their `spawn_time` on.
    pub obstacles: Vec<Obstacle>,
    pub spawn: SpawnConfig,
    /// Per-seed uniform jitter applied to each listed obstacle's start
    /// position along its heading, in meters.
    pub position_jitter: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            r_detect: 8.0,
            obstacles: Vec::new(),
            spawn: SpawnConfig::default(),
            position_jitter: 0.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.r_detect > 0.0) {
            return Err(ConfigError::invalid("r_detect must be positive"));
        }
        if !(self.position_jitter >= 0.0) {
            return Err(ConfigError::invalid("position_jitter must be nonnegative"));
        }
        self.spawn.validate()?;
        for o in &self.obstacles {
            o.validate(self.r_detect)?;
        }
        Ok(())
    }
}

/// Simulation-side world state. Owned by the run loop.
#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    obstacles: Vec<(usize, Obstacle)>,
    next_id: usize,
    next_arrival: f64,
    spawn_rng: ChaCha8Rng,
    sensor_rng: ChaCha8Rng,
}

impl World {
    pub fn new(cfg: &WorldConfig, seed: u64) -> Self {
        let mut spawn_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sensor_rng = ChaCha8Rng::seed_from_u64(seed);
        sensor_rng.set_stream(1);
        let mut obstacles = Vec::with_capacity(cfg.obstacles.len());
        for (id, o) in cfg.obstacles.iter().enumerate() {
            let mut o = *o;
            if cfg.position_jitter > 0.0 {
                // slide along the path so the start stays inside the circle
                let s = uniform(&mut spawn_rng, 0.0, cfg.position_jitter);
                let (sn, cs) = o.heading.sin_cos();
                let moved = [o.p0[0] + s * cs, o.p0[1] + s * sn];
                if moved[0].hypot(moved[1]) <= cfg.r_detect {
                    o.p0 = moved;
                }
            }
            obstacles.push((id, o));
        }
        let next_arrival = if cfg.spawn.rate > 0.0 {
            exp_sample(&mut spawn_rng, cfg.spawn.rate)
        } else {
            f64::INFINITY
        };
        Self {
            cfg: cfg.clone(),
            next_id: obstacles.len(),
            obstacles,
            next_arrival,
            spawn_rng,
            sensor_rng,
        }
    }

    /// Spawn random arrivals up to `t` and drop obstacles that have left the
    /// detection circle.
    pub fn advance(&mut self, t: f64) {
        while self.next_arrival <= t {
            let o = spawn_obstacle(&mut self.spawn_rng, &self.cfg.spawn, self.cfg.r_detect, self.next_arrival);
            self.obstacles.push((self.next_id, o));
            self.next_id += 1;
            self.next_arrival += exp_sample(&mut self.spawn_rng, self.cfg.spawn.rate);
        }
        let r = self.cfg.r_detect;
        self.obstacles.retain(|(_, o)| {
            if t < o.spawn_time {
                return true;
            }
            let p = true_position(o, t);
            p[0].hypot(p[1]) <= r + 1e-9
        });
    }

    /// Obstacles present at `t`.
    pub fn active(&self, t: f64) -> impl Iterator<Item = (usize, &Obstacle)> {
        self.obstacles
            .iter()
            .filter(move |(_, o)| o.spawn_time <= t + 1e-12)
            .map(|(id, o)| (*id, o))
    }

    pub fn measure_all(&mut self, t: f64, bounds: &DisturbanceBounds) -> Vec<Measurement> {
        let active: Vec<(usize, Obstacle)> = self.active(t).map(|(id, o)| (id, *o)).collect();
        active
            .iter()
            .map(|(id, o)| measure(o, *id, t, &mut self.sensor_rng, bounds))
            .collect()
    }
}

fn exp_sample(rng: &mut impl Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}
