//! Fixed-step synchronous integration of the single-integrator swarm.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::controller::{chain_radii, AgentState, ControlError, ControllerParams, Logic, SwarmController};
use crate::geometry::{Location, Point2, QuadrangleChain, Vec2};

/// Sampling period of the Lyapunov trace, in steps.
pub const LYAPUNOV_EVERY: usize = 10;
/// Default deadlock window in seconds.
pub const DEADLOCK_WINDOW: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub chain: QuadrangleChain,
    pub agents: Vec<AgentState>,
    pub params: ControllerParams,
    /// Step in seconds.
    pub dt: f64,
    /// Simulated horizon in seconds.
    pub t_end: f64,
    pub logic: Logic,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

pub const WIDTH_CLAUSE: &str = "wide enough for at least one agent to pass";

/// Checks initial conditions, corridor width and parameter sanity.
pub fn validate_scenario(cfg: &ScenarioConfig) -> ValidationReport {
    let mut out = Vec::new();
    let prm = &cfg.params;
    if let Err(e) = prm.validate() {
        out.push(e.to_string());
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        out.push(format!("time step must be positive, got {}", cfg.dt));
    }
    if !(cfg.t_end >= cfg.dt) {
        out.push(format!("end time {} is shorter than one step", cfg.t_end));
    }
    if cfg.agents.is_empty() {
        out.push("scenario has no agents".into());
    }
    if cfg.logic.is_single() && cfg.chain.len() != 1 {
        out.push(format!(
            "logic {} needs a single-trapezoid tube, got {} quadrangles",
            cfg.logic.name(),
            cfg.chain.len()
        ));
    }
    for a in &cfg.agents {
        if !(a.v_max > 0.0 && a.v_max.is_finite()) {
            out.push(format!("agent {}: maximum speed must be positive", a.id));
        }
        if cfg.chain.locate(a.p) == Location::Outside {
            out.push(format!("agent {}: disk outside tube (centre not inside)", a.id));
        } else if cfg.chain.wall_distance(a.p) <= prm.r_s {
            out.push(format!(
                "agent {}: disk outside tube (centre {:.4} m from a wall, safety radius {:.4} m)",
                a.id,
                cfg.chain.wall_distance(a.p),
                prm.r_s
            ));
        }
    }
    for (k, a) in cfg.agents.iter().enumerate() {
        for b in &cfg.agents[k + 1..] {
            let d = (a.p - b.p).norm();
            if d <= 2.0 * prm.r_s {
                out.push(format!("agents {} and {}: initial overlap ({d:.6} m apart)", a.id, b.id));
            }
        }
    }
    match chain_radii(&cfg.chain, prm.r_s) {
        Ok(radii) => {
            let n = radii.len();
            let own = |q: usize| if q == 0 || q > n { 0.0 } else { radii[q - 1].own };
            for q in 1..=n {
                let need = own(q - 1).max(own(q)).max(own(q + 1));
                if let Ok(d) = cfg.chain.decompose_quadrangle(q) {
                    let width = d.circumscribed.width();
                    if !(width > need) {
                        out.push(format!(
                            "quadrangle {q}: half-width {width:.4} m does not exceed revised safety radius {need:.4} m; tube must be {WIDTH_CLAUSE}"
                        ));
                    }
                }
            }
        }
        Err(e) => out.push(format!("revised safety radius: {e}")),
    }
    if out.is_empty() {
        match SwarmController::new(cfg.chain.clone(), *prm, cfg.logic) {
            Ok(ctl) => {
                let swarm = initial_swarm(cfg);
                for i in 0..swarm.len() {
                    if let Err(e) = ctl.command(i, &swarm) {
                        out.push(format!("agent {}: initial command fails: {e}", swarm[i].id));
                    }
                }
            }
            Err(e) => out.push(format!("controller: {e}")),
        }
    }
    ValidationReport { violations: out }
}

fn initial_swarm(cfg: &ScenarioConfig) -> Vec<AgentState> {
    let mut swarm = cfg.agents.clone();
    for a in &mut swarm {
        a.arrived = false;
    }
    swarm
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("scenario failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("controller setup: {0}")]
    Setup(ControlError),
    #[error("step {step}: {source}")]
    Control { step: usize, source: ControlError },
    #[error("step {step}: agents {i} and {j} are {dist:.6} m apart (limit {limit:.6} m)")]
    SafetyBreach {
        step: usize,
        i: usize,
        j: usize,
        dist: f64,
        limit: f64,
    },
    #[error("step {step}: agent {agent} is {dist:.6} m from a wall (limit {limit:.6} m)")]
    TubeBreach {
        step: usize,
        agent: usize,
        dist: f64,
        limit: f64,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl SimError {
    /// Whether the error reports a violated safety guarantee during the run.
    pub fn is_breach(&self) -> bool {
        matches!(
            self,
            SimError::SafetyBreach { .. }
                | SimError::TubeBreach { .. }
                | SimError::Control {
                    source: ControlError::SafetyBreach { .. } | ControlError::TubeBreach { .. } | ControlError::Outside { .. },
                    ..
                }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Timeout,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Timeout => "timeout",
        }
    }
}

/// State at the start of a step together with the commands applied during it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub positions: Vec<Point2>,
    pub commands: Vec<Vec2>,
    pub arrived: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub v: f64,
    /// `(V(t + dt) − V(t)) / dt` over the agents active at `t`.
    pub v_dot: f64,
}

/// Everything recorded during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub dt: f64,
    pub r_s: f64,
    pub samples: Vec<Sample>,
    /// Time at the end of each step.
    pub metric_times: Vec<f64>,
    /// Smallest distance between agents active during the step, measured after it.
    pub min_pair_dist: Vec<f64>,
    /// Smallest wall distance of agents active during the step, measured after it.
    pub min_boundary_dist: Vec<f64>,
    pub lyapunov: Vec<LyapunovSample>,
    pub arrival_times: Vec<Option<f64>>,
    pub final_positions: Vec<Point2>,
    /// Wall-clock seconds spent computing commands, per step.
    pub command_time: Vec<f64>,
    pub outcome: Option<Outcome>,
    pub ids: Vec<usize>,
    pub v_max: Vec<f64>,
    pub logic: Logic,
}

impl SimulationTrace {
    pub fn steps(&self) -> usize {
        self.min_pair_dist.len()
    }

    pub fn mean_command_time(&self) -> f64 {
        if self.command_time.is_empty() {
            0.0
        } else {
            self.command_time.iter().sum::<f64>() / self.command_time.len() as f64
        }
    }

    pub fn all_arrived(&self) -> bool {
        self.arrival_times.iter().all(Option::is_some)
    }
}

/// Stepwise driver around a [`SwarmController`].
pub struct Simulator {
    ctl: SwarmController,
    swarm: Vec<AgentState>,
    dt: f64,
    t_end: f64,
    step: usize,
    pool: rayon::ThreadPool,
    trace: SimulationTrace,
}

impl Simulator {
    /// Validates the scenario and prepares a run on `threads` worker threads (0 = rayon default).
    pub fn new(cfg: &ScenarioConfig, threads: usize) -> Result<Self, SimError> {
        let report = validate_scenario(cfg);
        if !report.is_ok() {
            return Err(SimError::Invalid(report));
        }
        let ctl = SwarmController::new(cfg.chain.clone(), cfg.params, cfg.logic).map_err(SimError::Setup)?;
        Self::with_controller(cfg, ctl, threads)
    }

    /// Like [`Simulator::new`] but with a caller-built controller; the scenario is not re-validated.
    pub fn with_controller(cfg: &ScenarioConfig, ctl: SwarmController, threads: usize) -> Result<Self, SimError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?;
        let swarm = initial_swarm(cfg);
        let trace = SimulationTrace {
            dt: cfg.dt,
            r_s: cfg.params.r_s,
            samples: Vec::new(),
            metric_times: Vec::new(),
            min_pair_dist: Vec::new(),
            min_boundary_dist: Vec::new(),
            lyapunov: Vec::new(),
            arrival_times: vec![None; swarm.len()],
            final_positions: swarm.iter().map(|a| a.p).collect(),
            command_time: Vec::new(),
            outcome: None,
            ids: swarm.iter().map(|a| a.id).collect(),
            v_max: swarm.iter().map(|a| a.v_max).collect(),
            logic: cfg.logic,
        };
        let mut sim = Self {
            ctl,
            swarm,
            dt: cfg.dt,
            t_end: cfg.t_end,
            step: 0,
            pool,
            trace,
        };
        // agents that start on the finishing line never move
        for i in 0..sim.swarm.len() {
            if sim.ctl.has_arrived(sim.swarm[i].p) {
                sim.swarm[i].arrived = true;
                sim.trace.arrival_times[i] = Some(0.0);
            }
        }
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn swarm(&self) -> &[AgentState] {
        &self.swarm
    }

    pub fn trace(&self) -> &SimulationTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SimulationTrace {
        self.trace
    }

    pub fn controller(&self) -> &SwarmController {
        &self.ctl
    }

    fn finished(&self) -> bool {
        self.swarm.iter().all(|a| a.arrived) || self.step as f64 * self.dt >= self.t_end - 0.5 * self.dt
    }

    /// Advances one step; returns `false` once the run is over.
    pub fn advance(&mut self) -> Result<bool, SimError> {
        if self.trace.outcome.is_some() {
            return Ok(false);
        }
        if self.finished() {
            self.trace.outcome = Some(if self.swarm.iter().all(|a| a.arrived) {
                Outcome::Completed
            } else {
                Outcome::Timeout
            });
            return Ok(false);
        }
        let step = self.step;
        let t = self.time();
        let active: Vec<usize> = (0..self.swarm.len()).filter(|&i| !self.swarm[i].arrived).collect();

        let started = Instant::now();
        let snapshot = &self.swarm;
        let ctl = &self.ctl;
        let results: Vec<Result<Vec2, ControlError>> = self
            .pool
            .install(|| (0..snapshot.len()).into_par_iter().map(|i| ctl.command(i, snapshot)).collect());
        self.trace.command_time.push(started.elapsed().as_secs_f64());
        let mut commands = Vec::with_capacity(results.len());
        for r in results {
            commands.push(r.map_err(|source| SimError::Control { step, source })?);
        }

        let sample_lyapunov = self.ctl.logic() == Logic::SingleTrapezoidV1 && step % LYAPUNOV_EVERY == 0;
        let v_before = if sample_lyapunov {
            Some(self.ctl.lyapunov(&self.swarm, &active).map_err(|source| SimError::Control { step, source })?)
        } else {
            None
        };

        self.trace.samples.push(Sample {
            t,
            positions: self.swarm.iter().map(|a| a.p).collect(),
            commands: commands.clone(),
            arrived: self.swarm.iter().map(|a| a.arrived).collect(),
        });

        for &i in &active {
            self.swarm[i].p += commands[i] * self.dt;
        }
        self.step += 1;
        let t_next = self.time();

        if let Some(v0) = v_before {
            let v1 = self.ctl.lyapunov(&self.swarm, &active).map_err(|source| SimError::Control { step, source })?;
            self.trace.lyapunov.push(LyapunovSample {
                t,
                v: v0,
                v_dot: (v1 - v0) / self.dt,
            });
        }

        let r_s = self.ctl.params().r_s;
        let mut min_pair = f64::INFINITY;
        for (k, &i) in active.iter().enumerate() {
            for &j in &active[k + 1..] {
                let d = (self.swarm[i].p - self.swarm[j].p).norm();
                if d <= 2.0 * r_s {
                    return Err(SimError::SafetyBreach {
                        step,
                        i: self.swarm[i].id,
                        j: self.swarm[j].id,
                        dist: d,
                        limit: 2.0 * r_s,
                    });
                }
                min_pair = min_pair.min(d);
            }
        }
        let mut min_wall = f64::INFINITY;
        for &i in &active {
            let d = self.ctl.chain().wall_distance(self.swarm[i].p);
            if d <= r_s {
                return Err(SimError::TubeBreach {
                    step,
                    agent: self.swarm[i].id,
                    dist: d,
                    limit: r_s,
                });
            }
            min_wall = min_wall.min(d);
        }
        self.trace.metric_times.push(t_next);
        self.trace.min_pair_dist.push(min_pair);
        self.trace.min_boundary_dist.push(min_wall);

        for &i in &active {
            if self.ctl.has_arrived(self.swarm[i].p) {
                self.swarm[i].arrived = true;
                self.trace.arrival_times[i] = Some(t_next);
            }
        }
        self.trace.final_positions = self.swarm.iter().map(|a| a.p).collect();
        Ok(true)
    }

    /// Runs to completion or timeout.
    pub fn run_to_end(&mut self) -> Result<Outcome, SimError> {
        while self.advance()? {}
        Ok(self.trace.outcome.expect("outcome set when the run ends"))
    }
}

/// Validates and runs a scenario on the default thread pool.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationTrace, SimError> {
    run_with_threads(cfg, 0)
}

pub fn run_with_threads(cfg: &ScenarioConfig, threads: usize) -> Result<SimulationTrace, SimError> {
    let mut sim = Simulator::new(cfg, threads)?;
    sim.run_to_end()?;
    Ok(sim.into_trace())
}

/// A stretch of time during which a non-arrived agent barely moved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlockEvent {
    pub agent: usize,
    pub start: f64,
    pub end: f64,
}

/// Maximal runs of `speed < v_eps` by non-arrived agents lasting at least `window` seconds.
pub fn detect_deadlock(trace: &SimulationTrace, window: f64, v_eps: f64) -> Vec<DeadlockEvent> {
    let n = trace.ids.len();
    let mut events = Vec::new();
    for i in 0..n {
        let mut run_start: Option<f64> = None;
        let close = |start: f64, end: f64, events: &mut Vec<DeadlockEvent>| {
            if end - start >= window - 1e-9 {
                events.push(DeadlockEvent {
                    agent: trace.ids[i],
                    start,
                    end,
                });
            }
        };
        for s in &trace.samples {
            let slow = !s.arrived[i] && s.commands[i].norm() < v_eps;
            match (slow, run_start) {
                (true, None) => run_start = Some(s.t),
                (false, Some(start)) => {
                    close(start, s.t, &mut events);
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(start) = run_start {
            let end = trace.samples.last().map_or(start, |s| s.t + trace.dt);
            close(start, end, &mut events);
        }
    }
    events
}

/// Default speed threshold for [`detect_deadlock`]: `1e-3 · max v_max`.
pub fn default_deadlock_speed(trace: &SimulationTrace) -> f64 {
    1e-3 * trace.v_max.iter().cloned().fold(0.0, f64::max)
}

/// Rejection-samples `count` agents inside quadrangle 1 with wall clearance `margin`
/// and pairwise separation `separation`; speeds are drawn from `speeds`.
pub fn random_placement(
    chain: &QuadrangleChain,
    count: usize,
    margin: f64,
    separation: f64,
    speeds: &[f64],
    seed: u64,
) -> Option<Vec<AgentState>> {
    let verts = chain.quad_vertices(1).ok()?;
    let (lo, hi) = verts
        .iter()
        .fold((verts[0], verts[0]), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents: Vec<AgentState> = Vec::with_capacity(count);
    for _ in 0..count * 10_000 {
        if agents.len() == count {
            break;
        }
        let p = Point2::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
        if !chain.quad_contains(1, p).ok()? || chain.wall_distance(p) <= margin {
            continue;
        }
        if agents.iter().any(|a| (a.p - p).norm() <= separation) {
            continue;
        }
        let v = speeds[rng.random_range(0..speeds.len())];
        agents.push(AgentState::new(agents.len(), p, v));
    }
    (agents.len() == count).then_some(agents)
}
