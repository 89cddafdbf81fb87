//! Scenario files: a JSON document describing the tube, the swarm and the run.
//!
//! Units: every length is in meters, every speed in m/s, times in seconds.
//! Gains and epsilons are dimensionless.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vtube::controller::{AgentState, ControllerParams, Logic};
use vtube::geometry::{GeometryError, Point2, QuadrangleChain};
use vtube::simulator::ScenarioConfig;

pub const SCENARIO_VERSION: &str = "vtube-scenario/1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported scenario version {found:?}, expected {SCENARIO_VERSION:?}")]
    Version { found: String },
    #[error("invalid tube: {0}")]
    Tube(#[from] GeometryError),
}

impl ScenarioError {
    /// True for errors in the document itself rather than in what it describes.
    pub fn is_parse(&self) -> bool {
        !matches!(self, ScenarioError::Tube(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicName {
    Direct,
    Modified,
    SingleV1,
    SingleV2,
}

impl From<LogicName> for Logic {
    fn from(l: LogicName) -> Self {
        match l {
            LogicName::Direct => Logic::Direct,
            LogicName::Modified => Logic::Modified,
            LogicName::SingleV1 => Logic::SingleTrapezoidV1,
            LogicName::SingleV2 => Logic::SingleTrapezoidV2,
        }
    }
}

impl From<Logic> for LogicName {
    fn from(l: Logic) -> Self {
        match l {
            Logic::Direct => LogicName::Direct,
            Logic::Modified => LogicName::Modified,
            Logic::SingleTrapezoidV1 => LogicName::SingleV1,
            Logic::SingleTrapezoidV2 => LogicName::SingleV2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    /// Initial position `[x, y]` in meters.
    pub position: [f64; 2],
    /// Speed cap in m/s.
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub eps_m: f64,
    pub eps_s: f64,
    pub eps_t: f64,
    /// Arrival threshold in meters.
    pub eps_0: f64,
    pub r_s: f64,
    pub r_a: f64,
    pub lambda0: f64,
}

impl From<ParamsSpec> for ControllerParams {
    fn from(p: ParamsSpec) -> Self {
        ControllerParams {
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            eps_m: p.eps_m,
            eps_s: p.eps_s,
            eps_t: p.eps_t,
            eps_0: p.eps_0,
            r_s: p.r_s,
            r_a: p.r_a,
            lambda0: p.lambda0,
        }
    }
}

impl From<ControllerParams> for ParamsSpec {
    fn from(p: ControllerParams) -> Self {
        ParamsSpec {
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            eps_m: p.eps_m,
            eps_s: p.eps_s,
            eps_t: p.eps_t,
            eps_0: p.eps_0,
            r_s: p.r_s,
            r_a: p.r_a,
            lambda0: p.lambda0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    /// Integration step in seconds.
    pub dt: f64,
    /// Simulated horizon in seconds.
    pub t_end: f64,
    pub logic: LogicName,
    /// Seed for the randomized helpers; the run itself is deterministic.
    pub seed: u64,
}

/// On-disk form of a [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: String,
    /// Bases `[[p_fr], [p_fl]]` from the starting base to the finishing line.
    pub tube: Vec<[[f64; 2]; 2]>,
    pub agents: Vec<AgentSpec>,
    pub params: ParamsSpec,
    pub sim: SimSpec,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version { found: file.version });
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Builds the chain and agents; geometric validity is checked here, the
    /// rest by [`vtube::simulator::validate_scenario`].
    pub fn to_config(&self) -> Result<ScenarioConfig, ScenarioError> {
        let bases = self
            .tube
            .iter()
            .map(|[fr, fl]| (Point2::new(fr[0], fr[1]), Point2::new(fl[0], fl[1])))
            .collect();
        let chain = QuadrangleChain::new(bases)?;
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(id, a)| AgentState::new(id, Point2::new(a.position[0], a.position[1]), a.v_max))
            .collect();
        Ok(ScenarioConfig {
            chain,
            agents,
            params: self.params.into(),
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            logic: self.sim.logic.into(),
            seed: self.sim.seed,
        })
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        ScenarioFile {
            version: SCENARIO_VERSION.to_string(),
            tube: cfg
                .chain
                .bases()
                .iter()
                .map(|(fr, fl)| [[fr.x, fr.y], [fl.x, fl.y]])
                .collect(),
            agents: cfg
                .agents
                .iter()
                .map(|a| AgentSpec {
                    position: [a.p.x, a.p.y],
                    v_max: a.v_max,
                })
                .collect(),
            params: cfg.params.into(),
            sim: SimSpec {
                dt: cfg.dt,
                t_end: cfg.t_end,
                logic: cfg.logic.into(),
                seed: cfg.seed,
            },
        }
    }
}
