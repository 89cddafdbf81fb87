//! The `simulate`, `check` and `plot` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vtube::geometry::TrapezoidTube;
use vtube::potentials::{extend_boundaries, ExtendedBoundary, DIRECTION_GRID};
use vtube::simulator::{
    default_deadlock_speed, detect_deadlock, validate_scenario, ScenarioConfig, SimError, Simulator, DEADLOCK_WINDOW,
};
use vtube::verification::{direction_constraint_sampler, gradient_suite, prop1_oracle, OracleReport};

use crate::output::{self, Summary};
use crate::plot;
use crate::scenario::{LogicName, ScenarioFile};

/// Process exit status of a subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Parse = 2,
    Validation = 3,
    SafetyBreach = 4,
    OracleFailure = 5,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Interior samples per trapezoid for the revised-radius check.
pub const PROP1_SAMPLES: usize = 10_000;
/// Random states per derivative for the gradient checks run by `check`.
pub const CHECK_GRADIENT_STATES: usize = 200;

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub dt_override: Option<f64>,
    pub logic_override: Option<LogicName>,
    /// Seconds; defaults to the start and the end of the run.
    pub snapshot_times: Option<Vec<f64>>,
    /// Worker threads for command evaluation, 0 for the default.
    pub threads: usize,
}

enum Loaded {
    Ready(Box<(ScenarioFile, ScenarioConfig)>),
    Rejected(Exit),
}

fn load(path: &Path, dt: Option<f64>, logic: Option<LogicName>, log: &mut dyn Write) -> anyhow::Result<Loaded> {
    let mut file = match ScenarioFile::load(path) {
        Ok(f) => f,
        Err(e) => {
            writeln!(log, "error: {e}")?;
            return Ok(Loaded::Rejected(Exit::Parse));
        }
    };
    if let Some(dt) = dt {
        file.sim.dt = dt;
    }
    if let Some(logic) = logic {
        file.sim.logic = logic;
    }
    match file.to_config() {
        Ok(cfg) => Ok(Loaded::Ready(Box::new((file, cfg)))),
        Err(e) => {
            writeln!(log, "scenario is invalid:\n- {e}")?;
            Ok(Loaded::Rejected(Exit::Validation))
        }
    }
}

fn report_validation(cfg: &ScenarioConfig, log: &mut dyn Write) -> anyhow::Result<bool> {
    let report = validate_scenario(cfg);
    if report.is_ok() {
        return Ok(true);
    }
    writeln!(log, "scenario is invalid:")?;
    write!(log, "{report}")?;
    Ok(false)
}

/// Runs a scenario and writes its trace, summary and snapshots into `opts.out`.
pub fn cmd_simulate(opts: &SimulateOptions, log: &mut dyn Write) -> anyhow::Result<Exit> {
    let (file, cfg) = match load(&opts.scenario, opts.dt_override, opts.logic_override, log)? {
        Loaded::Ready(b) => *b,
        Loaded::Rejected(exit) => return Ok(exit),
    };
    if !report_validation(&cfg, log)? {
        return Ok(Exit::Validation);
    }
    let mut sim = match Simulator::new(&cfg, opts.threads) {
        Ok(sim) => sim,
        Err(SimError::ThreadPool(e)) => bail!("cannot start worker threads: {e}"),
        Err(e) => {
            writeln!(log, "scenario is invalid:\n- {e}")?;
            return Ok(Exit::Validation);
        }
    };
    let failure = sim.run_to_end().err();
    let trace = sim.into_trace();

    let (outcome, violations, exit) = match &failure {
        None => (trace.outcome.map_or("timeout", |o| o.name()), Vec::new(), Exit::Ok),
        Some(e) => {
            let kind = match e {
                SimError::SafetyBreach { .. } => "safety_breach",
                SimError::TubeBreach { .. } => "tube_breach",
                _ => "control_error",
            };
            writeln!(log, "run stopped: {e}")?;
            (kind, vec![e.to_string()], Exit::SafetyBreach)
        }
    };
    let deadlocks = detect_deadlock(&trace, DEADLOCK_WINDOW, default_deadlock_speed(&trace));
    let summary = Summary::from_trace(&trace, outcome, violations, deadlocks);
    output::write_trace(&opts.out, &file, &trace, &summary)
        .with_context(|| format!("writing trace into {}", opts.out.display()))?;

    let times = opts
        .snapshot_times
        .clone()
        .unwrap_or_else(|| vec![0.0, summary.t_final]);
    for t in times {
        let svg = plot::snapshot_svg(&cfg.chain, cfg.params.r_s, cfg.params.r_a, &trace, t);
        let path = opts.out.join(format!("snapshot_{t:.3}.svg"));
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    }

    writeln!(
        log,
        "outcome={} steps={} t_final={:.3} arrived={}/{} min_pair_dist={} min_boundary_dist={} deadlock_events={}",
        summary.outcome,
        summary.steps,
        summary.t_final,
        summary.arrived,
        summary.agents,
        summary.min_pair_dist.map_or("none".into(), |d| format!("{d:.6}")),
        summary.min_boundary_dist.map_or("none".into(), |d| format!("{d:.6}")),
        summary.deadlock_events.len()
    )?;
    Ok(exit)
}

/// Every trapezoid the controller may steer with, labelled by quadrangle and role.
pub fn region_trapezoids(cfg: &ScenarioConfig) -> Vec<(String, TrapezoidTube)> {
    let mut out: Vec<(String, TrapezoidTube)> = Vec::new();
    for q in 1..=cfg.chain.len() {
        let Ok(d) = cfg.chain.decompose_quadrangle(q) else {
            continue;
        };
        out.push((format!("q{q}/circumscribed"), d.circumscribed.clone()));
        let same = d
            .inscribed
            .vertices()
            .iter()
            .zip(d.circumscribed.vertices())
            .all(|(a, b)| (a - b).norm() <= 1e-9);
        if !same {
            out.push((format!("q{q}/inscribed"), d.inscribed.clone()));
        }
        if let Some(b) = &d.bottom {
            out.push((format!("q{q}/bottom"), b.clone()));
        }
    }
    out
}

fn failed_report(name: &str, message: String) -> OracleReport {
    OracleReport {
        name: name.to_string(),
        cases: 1,
        failures: 1,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_input: String::new(),
        pass: false,
        note: message,
    }
}

/// All oracle reports for a validated scenario, each tagged with its region.
pub fn check_reports(cfg: &ScenarioConfig) -> Vec<(String, OracleReport)> {
    let prm = &cfg.params;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for (label, tube) in region_trapezoids(cfg) {
        // only the unsafe direction of the revised-radius test is guaranteed
        // for general trapezoids; conservative disagreements are reported
        let (mut rep, counts) = prop1_oracle(&tube, prm.r_s, PROP1_SAMPLES, &mut rng);
        rep.name = "revised_radius_soundness".into();
        rep.failures = counts.unsafe_;
        rep.pass = counts.unsafe_ == 0;
        out.push((label.clone(), rep));

        let ext = match extend_boundaries(&tube, prm.lambda0, prm.r_s) {
            Ok(ext) => {
                out.push((label.clone(), direction_constraint_sampler(&tube, &ext, DIRECTION_GRID)));
                ext
            }
            Err(e) => {
                out.push((label.clone(), failed_report("direction_constraints", e.to_string())));
                ExtendedBoundary::with_factor(&tube, prm.lambda0, prm.r_s)
            }
        };
        for rep in gradient_suite(prm, &tube, Some(&ext), CHECK_GRADIENT_STATES, &mut rng) {
            out.push((label.clone(), rep));
        }
    }
    out
}

/// Validates a scenario and runs the geometric and analytic oracles on it.
pub fn cmd_check(scenario: &Path, log: &mut dyn Write) -> anyhow::Result<Exit> {
    let (_, cfg) = match load(scenario, None, None, log)? {
        Loaded::Ready(b) => *b,
        Loaded::Rejected(exit) => return Ok(exit),
    };
    if !report_validation(&cfg, log)? {
        return Ok(Exit::Validation);
    }
    writeln!(log, "validation: ok")?;
    let reports = check_reports(&cfg);
    for (label, rep) in &reports {
        writeln!(log, "region={label} {rep}")?;
    }
    match reports.iter().find(|(_, r)| !r.pass) {
        Some((label, rep)) => {
            writeln!(log, "check failed: first failing oracle {} in region {label}", rep.name)?;
            Ok(Exit::OracleFailure)
        }
        None => {
            writeln!(log, "check passed: {} reports", reports.len())?;
            Ok(Exit::Ok)
        }
    }
}

/// Renders the distance plot of a trace directory to `out`, and its paths next to it.
pub fn cmd_plot(trace_dir: &Path, out: &Path, log: &mut dyn Write) -> anyhow::Result<Exit> {
    let read = |name: &str| {
        let path = trace_dir.join(name);
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
    };
    let scenario = ScenarioFile::parse(&read(output::SCENARIO_COPY)?).context("trace scenario copy")?;
    let cfg = scenario.to_config().context("trace scenario copy")?;
    let metrics = output::parse_metrics(&read(output::METRICS_FILE)?).map_err(anyhow::Error::msg)?;
    if metrics.is_empty() {
        bail!("trace in {} has no steps", trace_dir.display());
    }
    let rows = output::parse_trajectory(&read(output::TRAJECTORY_FILE)?).map_err(anyhow::Error::msg)?;

    std::fs::write(out, plot::distance_plot_svg(&metrics, cfg.params.r_s))
        .with_context(|| format!("writing {}", out.display()))?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let paths = out.with_file_name(format!("{stem}_trajectories.svg"));
    std::fs::write(&paths, plot::trajectories_svg(&cfg.chain, cfg.params.r_s, cfg.params.r_a, &rows))
        .with_context(|| format!("writing {}", paths.display()))?;
    writeln!(log, "wrote {} and {}", out.display(), paths.display())?;
    Ok(Exit::Ok)
}
