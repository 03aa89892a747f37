use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::SimError;

use super::run::{run, ControllerKind, RunMetrics};
use super::Scenario;

#[derive(Debug, Clone, Serialize)]
pub struct BatchRun {
    pub controller: ControllerKind,
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Runs contributing a value (absent optional fields are skipped).
    pub count: usize,
}

impl FieldStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
            count: n,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ControllerSummary {
    pub controller: ControllerKind,
    pub runs: usize,
    pub failures: usize,
    pub fields: BTreeMap<String, FieldStats>,
    /// Fraction of seeds on which this controller finished strictly first;
    /// unfinished runs count as never finishing. `None` with one controller.
    pub win_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub runs: Vec<BatchRun>,
    pub summary: Vec<ControllerSummary>,
}

/// Numeric view of a metrics record, keyed by field name. Booleans map to 0/1.
pub fn numeric_fields(m: &RunMetrics) -> BTreeMap<String, f64> {
    let value = serde_json::to_value(m).expect("metrics serialize");
    let mut out = BTreeMap::new();
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            let x = match v {
                serde_json::Value::Number(n) => n.as_f64(),
                serde_json::Value::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
                _ => None,
            };
            if let Some(x) = x {
                out.insert(k, x);
            }
        }
    }
    out
}

/// Run every (controller, seed) pair in parallel. Individual failures are
/// recorded per run; the table is independent of seed order.
pub fn batch(scenario: &Scenario, controllers: &[ControllerKind], seeds: &[u64]) -> Result<BatchReport, SimError> {
    scenario.validate()?;
    if seeds.is_empty() {
        return Err(SimError::Runtime("batch needs at least one seed".into()));
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let mut controllers = controllers.to_vec();
    controllers.sort();
    controllers.dedup();

    let jobs: Vec<(ControllerKind, u64)> = controllers
        .iter()
        .flat_map(|c| seeds.iter().map(move |s| (*c, *s)))
        .collect();
    let runs: Vec<BatchRun> = jobs
        .par_iter()
        .map(|&(controller, seed)| match run(scenario, controller, seed) {
            Ok(out) => BatchRun {
                controller,
                seed,
                metrics: Some(out.metrics),
                error: None,
            },
            Err(e) => BatchRun {
                controller,
                seed,
                metrics: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let finish = |r: &BatchRun| {
        r.metrics
            .as_ref()
            .and_then(|m| m.completion_time)
            .unwrap_or(f64::INFINITY)
    };
    let summary = controllers
        .iter()
        .map(|&c| {
            let mine: Vec<&BatchRun> = runs.iter().filter(|r| r.controller == c).collect();
            let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in &mine {
                if let Some(m) = &r.metrics {
                    for (k, v) in numeric_fields(m) {
                        columns.entry(k).or_default().push(v);
                    }
                }
            }
            let fields = columns
                .into_iter()
                .filter_map(|(k, v)| FieldStats::of(&v).map(|s| (k, s)))
                .collect();
            let win_rate = (controllers.len() > 1).then(|| {
                let wins = seeds
                    .iter()
                    .filter(|&&s| {
                        let at = |ctl: ControllerKind| {
                            runs.iter()
                                .find(|r| r.controller == ctl && r.seed == s)
                                .map(finish)
                                .unwrap_or(f64::INFINITY)
                        };
                        let own = at(c);
                        own.is_finite() && controllers.iter().filter(|&&o| o != c).all(|&o| own < at(o))
                    })
                    .count();
                wins as f64 / seeds.len() as f64
            });
            ControllerSummary {
                controller: c,
                runs: mine.len(),
                failures: mine.iter().filter(|r| r.error.is_some()).count(),
                fields,
                win_rate,
            }
        })
        .collect();
    Ok(BatchReport { runs, summary })
}

impl BatchReport {
    pub fn summary_for(&self, c: ControllerKind) -> Option<&ControllerSummary> {
        self.summary.iter().find(|s| s.controller == c)
    }

    pub fn metrics_for(&self, c: ControllerKind) -> impl Iterator<Item = (u64, &RunMetrics)> {
        self.runs
            .iter()
            .filter(move |r| r.controller == c)
            .filter_map(|r| r.metrics.as_ref().map(|m| (r.seed, m)))
    }

    /// Write `summary.json` (full report) and `runs.csv` (one line per run).
    pub fn save(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
        let path = dir.join("summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| SimError::io(&path, e))?;

        let path = dir.join("runs.csv");
        let file = std::fs::File::create(&path).map_err(|e| SimError::io(&path, e))?;
        let mut wr = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let names: Vec<String> = self
            .runs
            .iter()
            .find_map(|r| r.metrics.as_ref())
            .map(|m| numeric_fields(m).into_keys().collect())
            .unwrap_or_default();
        let mut header = vec!["controller".to_string(), "seed".to_string(), "error".to_string()];
        header.extend(names.iter().cloned());
        wr.write_record(&header)?;
        for r in &self.runs {
            let mut rec = vec![
                r.controller.to_string(),
                r.seed.to_string(),
                r.error.clone().unwrap_or_default(),
            ];
            let vals = r.metrics.as_ref().map(numeric_fields).unwrap_or_default();
            rec.extend(names.iter().map(|n| vals.get(n).map(|v| format!("{v}")).unwrap_or_default()));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| SimError::io(&path, e))?;
        Ok(())
    }
}

/// Parse `a..b` (inclusive) or a comma-separated list of seeds.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range start {a:?}"))?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad seed range end {b:?}"))?;
        if b < a {
            return Err(format!("empty seed range {spec}"));
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("bad seed {s:?}")))
        .collect()
}
