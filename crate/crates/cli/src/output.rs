//! Trace tables and the run summary.
//!
//! Tables are comma-separated with a header row. Times are written with six
//! decimals, lengths (m) and velocities (m/s) with nine, so files diff cleanly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vtube::simulator::{DeadlockEvent, SimulationTrace};

use crate::scenario::{LogicName, ScenarioFile};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LYAPUNOV_FILE: &str = "lyapunov.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCENARIO_COPY: &str = "scenario.json";

/// Files whose bytes depend only on the scenario; the summary also carries wall time.
pub const DETERMINISTIC_FILES: [&str; 3] = [TRAJECTORY_FILE, METRICS_FILE, LYAPUNOV_FILE];

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "nan".into()
    }
}

/// One row per step per agent: `t,id,x,y,vx,vy,arrived`.
pub fn trajectory_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from("t,id,x,y,vx,vy,arrived\n");
    for s in &trace.samples {
        for (i, id) in trace.ids.iter().enumerate() {
            let (p, v) = (s.positions[i], s.commands[i]);
            let _ = writeln!(
                out,
                "{:.6},{id},{},{},{},{},{}",
                s.t,
                num(p.x),
                num(p.y),
                num(v.x),
                num(v.y),
                u8::from(s.arrived[i])
            );
        }
    }
    out
}

/// One row per step, measured after the move: `t,min_pair_dist,min_boundary_dist`.
pub fn metrics_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from("t,min_pair_dist,min_boundary_dist\n");
    for k in 0..trace.metric_times.len() {
        let _ = writeln!(
            out,
            "{:.6},{},{}",
            trace.metric_times[k],
            num(trace.min_pair_dist[k]),
            num(trace.min_boundary_dist[k])
        );
    }
    out
}

/// Sampled Lyapunov values: `t,V,V_dot`. Header only for logics that do not log it.
pub fn lyapunov_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from("t,V,V_dot\n");
    for s in &trace.lyapunov {
        let _ = writeln!(out, "{:.6},{},{}", s.t, num(s.v), num(s.v_dot));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlockRecord {
    pub agent: usize,
    /// Seconds.
    pub start: f64,
    pub end: f64,
}

impl From<DeadlockEvent> for DeadlockRecord {
    fn from(e: DeadlockEvent) -> Self {
        DeadlockRecord {
            agent: e.agent,
            start: round9(e.start),
            end: round9(e.end),
        }
    }
}

/// Contents of `summary.json`. Distances in meters, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub logic: LogicName,
    /// `completed`, `timeout`, `safety_breach`, `tube_breach` or `control_error`.
    pub outcome: String,
    pub steps: usize,
    pub t_final: f64,
    pub dt: f64,
    pub r_s: f64,
    pub agents: usize,
    pub arrived: usize,
    /// Per agent, `null` if it never arrived.
    pub arrival_times: Vec<Option<f64>>,
    pub violations: Vec<String>,
    /// `null` when undefined, e.g. a single agent has no pairs.
    pub min_pair_dist: Option<f64>,
    pub min_boundary_dist: Option<f64>,
    pub deadlock_events: Vec<DeadlockRecord>,
    pub lyapunov_samples: usize,
    pub max_v_dot: Option<f64>,
    /// Mean wall-clock time to compute all commands of one step.
    pub mean_command_time_s: f64,
}

/// Rounds to the nine decimals used in the tables, so `14.386000000000001` reads `14.386`.
fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn finite_min(xs: &[f64]) -> Option<f64> {
    let m = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    m.is_finite().then_some(round9(m))
}

impl Summary {
    pub fn from_trace(trace: &SimulationTrace, outcome: &str, violations: Vec<String>, deadlocks: Vec<DeadlockEvent>) -> Self {
        let t_final = trace.metric_times.last().copied().unwrap_or(0.0);
        Summary {
            logic: trace.logic.into(),
            outcome: outcome.to_string(),
            steps: trace.steps(),
            t_final: round9(t_final),
            dt: trace.dt,
            r_s: trace.r_s,
            agents: trace.ids.len(),
            arrived: trace.arrival_times.iter().filter(|a| a.is_some()).count(),
            arrival_times: trace.arrival_times.iter().map(|a| a.map(round9)).collect(),
            violations,
            min_pair_dist: finite_min(&trace.min_pair_dist),
            min_boundary_dist: finite_min(&trace.min_boundary_dist),
            deadlock_events: deadlocks.into_iter().map(Into::into).collect(),
            lyapunov_samples: trace.lyapunov.len(),
            max_v_dot: trace.lyapunov.iter().map(|s| s.v_dot).reduce(f64::max).map(round9),
            mean_command_time_s: trace.mean_command_time(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Writes the tables, the summary and a copy of the scenario into `dir`.
pub fn write_trace(dir: &Path, scenario: &ScenarioFile, trace: &SimulationTrace, summary: &Summary) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(SCENARIO_COPY), scenario.to_json())?;
    std::fs::write(dir.join(TRAJECTORY_FILE), trajectory_csv(trace))?;
    std::fs::write(dir.join(METRICS_FILE), metrics_csv(trace))?;
    std::fs::write(dir.join(LYAPUNOV_FILE), lyapunov_csv(trace))?;
    std::fs::write(dir.join(SUMMARY_FILE), summary.to_json())?;
    Ok(())
}

/// A parsed metrics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub t: f64,
    pub min_pair_dist: f64,
    pub min_boundary_dist: f64,
}

/// A parsed trajectory row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub arrived: bool,
}

fn data_rows<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => return Err(format!("expected header {header:?}, found {other:?}")),
    }
    Ok(lines.enumerate().map(|(k, l)| (k + 2, l.split(',').collect())))
}

fn field<T: std::str::FromStr>(cols: &[&str], k: usize, line: usize) -> Result<T, String> {
    cols.get(k)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| format!("line {line}: bad or missing column {}", k + 1))
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricRow>, String> {
    data_rows(text, "t,min_pair_dist,min_boundary_dist")?
        .map(|(line, c)| {
            Ok(MetricRow {
                t: field(&c, 0, line)?,
                min_pair_dist: field(&c, 1, line)?,
                min_boundary_dist: field(&c, 2, line)?,
            })
        })
        .collect()
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryRow>, String> {
    data_rows(text, "t,id,x,y,vx,vy,arrived")?
        .map(|(line, c)| {
            Ok(TrajectoryRow {
                t: field(&c, 0, line)?,
                id: field(&c, 1, line)?,
                x: field(&c, 2, line)?,
                y: field(&c, 3, line)?,
                arrived: field::<u8>(&c, 6, line)? == 1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_decimals() {
        assert_eq!(num(0.1), "0.100000000");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(-2.0), "-2.000000000");
        assert_eq!(round9(14.386000000000001), 14.386);
    }

    #[test]
    fn metrics_round_trip() {
        let text = "t,min_pair_dist,min_boundary_dist\n0.001000,1.250000000,inf\n";
        let rows = parse_metrics(text).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].min_pair_dist, 1.25);
        assert!(rows[0].min_boundary_dist.is_infinite());
        assert!(parse_metrics("t,x\n").is_err());
        assert!(parse_metrics("t,min_pair_dist,min_boundary_dist\n0.1,abc,1\n").is_err());
    }
}
