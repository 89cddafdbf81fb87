//! Velocity-command synthesis for single trapezoids and quadrangle chains.

use thiserror::Error;

use crate::geometry::{GeometryError, Location, Point2, QuadrangleChain, TrapezoidTube, Vec2};
use crate::potentials::{
    extend_boundaries, keeping_term, line_integral_lyapunov, sat_vec, Barrier, BarrierParams,
    ExtendedBoundary, PotentialError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("agents {i} and {j} are {dist:.6} m apart, not more than twice the safety radius")]
    SafetyBreach { i: usize, j: usize, dist: f64 },
    #[error("agent {agent} has tube clearance {d_t:.6} m, not above the revised safety radius {limit:.6} m")]
    TubeBreach { agent: usize, d_t: f64, limit: f64 },
    #[error("agent {agent} is outside the tube")]
    Outside { agent: usize },
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Gains, thresholds and radii shared by every agent.
///
/// Lengths are in meters; gains and epsilons are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
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
    /// Initial panel extension factor.
    pub lambda0: f64,
}

impl ControllerParams {
    /// Unit gains, `ε = 1e-6`, `ε_0 = r_s / 10` and `λ0 = 3`.
    pub fn with_radii(r_s: f64, r_a: f64) -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            eps_m: 1e-6,
            eps_s: 1e-6,
            eps_t: 1e-6,
            eps_0: r_s / 10.0,
            r_s,
            r_a,
            lambda0: 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let all = [
            self.k1, self.k2, self.k3, self.eps_m, self.eps_s, self.eps_t, self.eps_0, self.r_s, self.r_a,
            self.lambda0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::InvalidParams("non-finite parameter".into()));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0) {
            return Err(ControlError::InvalidParams("gains must be positive".into()));
        }
        if !(self.eps_m > 0.0 && self.eps_t > 0.0 && self.eps_0 > 0.0) {
            return Err(ControlError::InvalidParams("epsilons must be positive".into()));
        }
        if !(self.eps_s > 0.0 && self.eps_s < 0.1) {
            return Err(ControlError::InvalidParams("eps_s must lie in (0, 0.1)".into()));
        }
        if !(self.r_a > self.r_s && self.r_s > 0.0) {
            return Err(ControlError::InvalidParams("radii must satisfy r_a > r_s > 0".into()));
        }
        if !(self.lambda0 >= 1.0) {
            return Err(ControlError::InvalidParams("lambda0 must be at least 1".into()));
        }
        Ok(())
    }

    pub fn barrier_params(&self) -> BarrierParams {
        BarrierParams {
            k2: self.k2,
            r_s: self.r_s,
            r_a: self.r_a,
            eps_m: self.eps_m,
            eps_s: self.eps_s,
        }
    }

    pub fn agent_barrier(&self) -> Result<Barrier, ControlError> {
        Ok(Barrier::agent(&self.barrier_params())?)
    }

    pub fn tube_barrier(&self, r_s_prime: f64) -> Result<Barrier, ControlError> {
        Ok(Barrier::tube(self.k3, r_s_prime, self.r_a, self.eps_t, self.eps_s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub p: Point2,
    /// Maximum speed in m/s.
    pub v_max: f64,
    pub arrived: bool,
}

impl AgentState {
    pub fn new(id: usize, p: Point2, v_max: f64) -> Self {
        Self {
            id,
            p,
            v_max,
            arrived: false,
        }
    }
}

/// Pre-saturation components of the modified controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBreakdown {
    /// Line approaching, `v_max · t_c`.
    pub f1: Vec2,
    /// Agent avoidance, `Σ b_ij (p_i − p_j)`.
    pub f2: Vec2,
    /// Tube keeping, `−(I − P_t) c`.
    pub f3: Vec2,
}

impl ForceBreakdown {
    pub fn command(&self, v_max: f64) -> Vec2 {
        -sat_vec(-self.f1 - self.f2 - self.f3, v_max)
    }
}

/// Non-arrived agents other than `i` within `r_a + r_s` of agent `i`.
pub fn neighbor_set(i: usize, swarm: &[AgentState], r_s: f64, r_a: f64) -> Vec<usize> {
    let p = swarm[i].p;
    swarm
        .iter()
        .enumerate()
        .filter(|&(j, a)| j != i && !a.arrived && (a.p - p).norm() <= r_a + r_s)
        .map(|(j, _)| j)
        .collect()
}

/// `Σ_{j ∈ N_i} b_ij (p_i − p_j)`.
fn avoidance_sum(i: usize, swarm: &[AgentState], params: &ControllerParams, barrier: &Barrier) -> Result<Vec2, ControlError> {
    let p = swarm[i].p;
    let mut sum = Vec2::zeros();
    for j in neighbor_set(i, swarm, params.r_s, params.r_a) {
        let diff = p - swarm[j].p;
        let dist = diff.norm();
        let slope = barrier.derivative(dist).map_err(|_| ControlError::SafetyBreach {
            i: swarm[i].id,
            j: swarm[j].id,
            dist,
        })?;
        sum += diff * (-slope / dist);
    }
    Ok(sum)
}

/// True once the agent is within `eps_0` of the finishing line (or past it).
pub fn arrival_check(p: Point2, finish_point: Point2, t_c: Vec2, eps_0: f64) -> bool {
    -t_c.dot(&(p - finish_point)) <= eps_0
}

/// Gradient-form controller with the panel wall barriers.
pub fn controller1(
    tube: &TrapezoidTube,
    i: usize,
    swarm: &[AgentState],
    params: &ControllerParams,
    extended: &ExtendedBoundary,
) -> Result<Vec2, ControlError> {
    controller1_signed(tube, i, swarm, params, extended, 1.0)
}

fn controller1_signed(
    tube: &TrapezoidTube,
    i: usize,
    swarm: &[AgentState],
    params: &ControllerParams,
    extended: &ExtendedBoundary,
    avoidance_sign: f64,
) -> Result<Vec2, ControlError> {
    let me = &swarm[i];
    if !tube.contains(me.p) {
        return Err(ControlError::Outside { agent: me.id });
    }
    let t = tube.t_c();
    let line = sat_vec(t * (params.k1 * t.dot(&(me.p - tube.p_fr()))), me.v_max);
    let avoid = avoidance_sum(i, swarm, params, &params.agent_barrier()?)?;
    let (gl, gr) = extended.wall_gradients(me.p, params.k3)?;
    Ok(-sat_vec(line - avoid * avoidance_sign + gl + gr, me.v_max))
}

/// Components of the modified controller on `tube` with revised safety radius `r_s_prime`.
pub fn force_breakdown(
    tube: &TrapezoidTube,
    i: usize,
    swarm: &[AgentState],
    params: &ControllerParams,
    r_s_prime: f64,
) -> Result<ForceBreakdown, ControlError> {
    let barrier = params.tube_barrier(r_s_prime)?;
    breakdown_with(tube, &barrier, i, swarm, params, &params.agent_barrier()?, 1.0)
}

fn breakdown_with(
    tube: &TrapezoidTube,
    tube_barrier: &Barrier,
    i: usize,
    swarm: &[AgentState],
    params: &ControllerParams,
    agent_barrier: &Barrier,
    avoidance_sign: f64,
) -> Result<ForceBreakdown, ControlError> {
    let me = &swarm[i];
    let keep = keeping_term(tube, me.p, tube_barrier).map_err(|e| match e {
        PotentialError::DomainViolation { value, limit } => ControlError::TubeBreach {
            agent: me.id,
            d_t: value,
            limit,
        },
        other => other.into(),
    })?;
    Ok(ForceBreakdown {
        f1: tube.t_c() * me.v_max,
        f2: avoidance_sum(i, swarm, params, agent_barrier)? * avoidance_sign,
        f3: -keep.projected,
    })
}

/// Modified controller: constant line approach, agent avoidance and lateral tube keeping.
pub fn controller2(
    tube: &TrapezoidTube,
    i: usize,
    swarm: &[AgentState],
    params: &ControllerParams,
    r_s_prime: f64,
) -> Result<Vec2, ControlError> {
    Ok(force_breakdown(tube, i, swarm, params, r_s_prime)?.command(swarm[i].v_max))
}

/// How agents pick the trapezoid they are steered through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Logic {
    /// Circumscribed trapezoid of the current quadrangle.
    Direct,
    /// Bottom or inscribed trapezoid, depending on the region.
    Modified,
    /// Gradient-form controller on a single trapezoid.
    SingleTrapezoidV1,
    /// Modified controller on a single trapezoid.
    SingleTrapezoidV2,
}

impl Logic {
    pub fn name(self) -> &'static str {
        match self {
            Logic::Direct => "direct",
            Logic::Modified => "modified",
            Logic::SingleTrapezoidV1 => "single_v1",
            Logic::SingleTrapezoidV2 => "single_v2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Logic::Direct,
            Logic::Modified,
            Logic::SingleTrapezoidV1,
            Logic::SingleTrapezoidV2,
        ]
        .into_iter()
        .find(|l| l.name() == s)
    }

    pub fn is_single(self) -> bool {
        matches!(self, Logic::SingleTrapezoidV1 | Logic::SingleTrapezoidV2)
    }
}

/// A trapezoid together with the tube barrier used on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub tube: TrapezoidTube,
    pub r_s_prime: f64,
    barrier: Barrier,
}

impl Region {
    fn new(tube: TrapezoidTube, r_s_prime: f64, params: &ControllerParams) -> Result<Self, ControlError> {
        let barrier = params.tube_barrier(r_s_prime).map_err(|_| {
            ControlError::InvalidParams(format!(
                "revised safety radius {r_s_prime:.4} m is not below the avoidance radius {:.4} m",
                params.r_a
            ))
        })?;
        Ok(Self {
            tube,
            r_s_prime,
            barrier,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct QuadRegions {
    circumscribed: Region,
    inscribed: Region,
    bottom: Option<Region>,
}

/// Revised safety radii of one quadrangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadRadii {
    /// Radius of the inscribed/circumscribed pair (they share legs and axis).
    pub own: f64,
    /// Radius of the bottom trapezoid's own geometry, if it exists.
    pub bottom: Option<f64>,
}

/// Command synthesis for a whole scenario: geometry, logic and precomputed radii.
#[derive(Debug, Clone)]
pub struct SwarmController {
    chain: QuadrangleChain,
    params: ControllerParams,
    logic: Logic,
    radii: Vec<QuadRadii>,
    direct: Vec<Region>,
    modified: Vec<QuadRegions>,
    extended: Option<ExtendedBoundary>,
    agent_barrier: Barrier,
    avoidance_sign: f64,
}

/// Revised radii of every quadrangle; index `q - 1` holds quadrangle `q`.
pub fn chain_radii(chain: &QuadrangleChain, r_s: f64) -> Result<Vec<QuadRadii>, GeometryError> {
    (1..=chain.len())
        .map(|q| {
            let d = chain.decompose_quadrangle(q)?;
            Ok(QuadRadii {
                own: d.circumscribed.revised_safety_radius(r_s)?,
                bottom: d.bottom.as_ref().map(|b| b.revised_safety_radius(r_s)).transpose()?,
            })
        })
        .collect()
}

impl SwarmController {
    pub fn new(chain: QuadrangleChain, params: ControllerParams, logic: Logic) -> Result<Self, ControlError> {
        params.validate()?;
        if logic.is_single() && chain.len() != 1 {
            return Err(ControlError::InvalidParams(format!(
                "single-trapezoid logic needs a one-quadrangle tube, got {}",
                chain.len()
            )));
        }
        let radii = chain_radii(&chain, params.r_s)?;
        let n = chain.len();
        let own = |q: usize| if q == 0 || q > n { 0.0 } else { radii[q - 1].own };
        let mut direct = Vec::with_capacity(n);
        let mut modified = Vec::with_capacity(n);
        for q in 1..=n {
            let d = chain.decompose_quadrangle(q)?;
            direct.push(Region::new(d.circumscribed.clone(), own(q), &params)?);
            let inscribed = Region::new(d.inscribed.clone(), own(q).max(own(q + 1)), &params)?;
            let bottom = match (&d.bottom, radii[q - 1].bottom) {
                (Some(tube), Some(r_b)) => Some(Region::new(tube.clone(), own(q - 1).max(own(q)).max(r_b), &params)?),
                _ => None,
            };
            modified.push(QuadRegions {
                circumscribed: Region::new(d.circumscribed.clone(), own(q), &params)?,
                inscribed,
                bottom,
            });
        }
        let extended = if logic == Logic::SingleTrapezoidV1 {
            Some(extend_boundaries(&direct[0].tube, params.lambda0, params.r_s)?)
        } else {
            None
        };
        Ok(Self {
            agent_barrier: params.agent_barrier()?,
            chain,
            params,
            logic,
            radii,
            direct,
            modified,
            extended,
            avoidance_sign: 1.0,
        })
    }

    /// Negative control only: reverses the sign of the avoidance term.
    #[doc(hidden)]
    pub fn with_flipped_avoidance(mut self) -> Self {
        self.avoidance_sign = -self.avoidance_sign;
        self
    }

    pub fn chain(&self) -> &QuadrangleChain {
        &self.chain
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn logic(&self) -> Logic {
        self.logic
    }

    pub fn radii(&self) -> &[QuadRadii] {
        &self.radii
    }

    pub fn extended_boundary(&self) -> Option<&ExtendedBoundary> {
        self.extended.as_ref()
    }

    /// Location used for switching, with agents slightly behind the first base
    /// or beyond the last one attributed to the end quadrangles.
    pub fn switching_location(&self, p: Point2) -> Location {
        match self.chain.locate(p) {
            Location::Outside => {
                let first = &self.modified[0].inscribed.tube;
                let n = self.chain.len();
                let last = &self.modified[n - 1].circumscribed.tube;
                if first.within_legs(p) && first.axial_offset(p) < 0.0 && first.t_c().dot(&(p - first.p_sr())) < 0.0 {
                    Location::Inscribed(1)
                } else if last.within_legs(p) && last.axial_offset(p) > 0.0 {
                    Location::Inscribed(n)
                } else {
                    Location::Outside
                }
            }
            loc => loc,
        }
    }

    /// The trapezoid region steering the agent at `p`.
    pub fn active_region(&self, agent: usize, p: Point2) -> Result<&Region, ControlError> {
        let loc = self.switching_location(p);
        let outside = ControlError::Outside { agent };
        Ok(match (self.logic, loc) {
            (_, Location::Outside) => return Err(outside),
            (Logic::Direct | Logic::SingleTrapezoidV1 | Logic::SingleTrapezoidV2, loc) => {
                &self.direct[loc.quad().unwrap_or(1) - 1]
            }
            (Logic::Modified, Location::Inscribed(q)) => &self.modified[q - 1].inscribed,
            (Logic::Modified, Location::Bottom(q)) => {
                let regions = &self.modified[q - 1];
                regions.bottom.as_ref().unwrap_or(&regions.circumscribed)
            }
        })
    }

    /// Final finishing line: a point on it and its axis.
    pub fn finishing_line(&self) -> (Point2, Vec2) {
        self.chain.finishing_line()
    }

    pub fn has_arrived(&self, p: Point2) -> bool {
        let (pf, t) = self.finishing_line();
        arrival_check(p, pf, t, self.params.eps_0)
    }

    /// Velocity command for agent `i` computed from the snapshot `swarm`.
    pub fn command(&self, i: usize, swarm: &[AgentState]) -> Result<Vec2, ControlError> {
        if swarm[i].arrived {
            return Ok(Vec2::zeros());
        }
        match self.logic {
            Logic::SingleTrapezoidV1 => {
                let ext = self.extended.as_ref().expect("extension built for V1");
                controller1_signed(&self.direct[0].tube, i, swarm, &self.params, ext, self.avoidance_sign)
            }
            _ => Ok(self.breakdown(i, swarm)?.command(swarm[i].v_max)),
        }
    }

    /// Force components of the modified controller in the agent's active region.
    pub fn breakdown(&self, i: usize, swarm: &[AgentState]) -> Result<ForceBreakdown, ControlError> {
        let region = self.active_region(swarm[i].id, swarm[i].p)?;
        breakdown_with(
            &region.tube,
            &region.barrier,
            i,
            swarm,
            &self.params,
            &self.agent_barrier,
            self.avoidance_sign,
        )
    }

    /// Total function `V` over the agents listed in `active` (gradient-form logic only).
    pub fn lyapunov(&self, swarm: &[AgentState], active: &[usize]) -> Result<f64, ControlError> {
        let ext = self.extended.as_ref().ok_or_else(|| {
            ControlError::InvalidParams("the total function V is defined for the gradient-form logic".into())
        })?;
        let tube = &self.direct[0].tube;
        let t = tube.t_c();
        let mut v = 0.0;
        for (k, &i) in active.iter().enumerate() {
            let a = &swarm[i];
            let p_l = t * t.dot(&(a.p - tube.p_fr()));
            v += line_integral_lyapunov(p_l, self.params.k1, a.v_max);
            v += ext.wall_potential(a.p, self.params.k3)?;
            for &j in &active[k + 1..] {
                let dist = (a.p - swarm[j].p).norm();
                v += self.agent_barrier.value(dist).map_err(|_| ControlError::SafetyBreach {
                    i: a.id,
                    j: swarm[j].id,
                    dist,
                })?;
            }
        }
        Ok(v)
    }
}
