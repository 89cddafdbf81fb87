//! Scalar potentials, barrier functions and their analytic gradients.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use gauss_quad::GaussLegendre;
use thiserror::Error;

use crate::geometry::{segment_distance, GeometryError, Point2, TrapezoidTube, Vec2};

/// Default Gauss–Legendre order for panel integrals.
pub const DEFAULT_PANEL_ORDER: usize = 32;
/// Largest extension factor tried by [`extend_boundaries`].
pub const MAX_EXTENSION: f64 = 64.0;
/// Nodes per side of the directional-constraint grid.
pub const DIRECTION_GRID: usize = 50;
/// Directional constraints count as met down to this (negative) slack.
pub const DIRECTION_SLACK: f64 = -1e-12;

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("barrier evaluated at {value} which is not above its inner knot {limit}")]
    DomainViolation { value: f64, limit: f64 },
    #[error("panel log argument not positive (margin {margin:.3e})")]
    LogDomain { margin: f64 },
    #[error("directional constraints still violated at extension factor {lambda}")]
    ConstraintUnsatisfiable { lambda: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Saturation gain: 1 under the cap, `v_max / ‖v‖` above it.
pub fn kappa(v: Vec2, v_max: f64) -> f64 {
    let n = v.norm();
    if n <= v_max {
        1.0
    } else {
        v_max / n
    }
}

/// Scales `v` down to norm `v_max` when it exceeds it; direction is kept.
pub fn sat_vec(v: Vec2, v_max: f64) -> Vec2 {
    v * kappa(v, v_max)
}

/// C¹ cubic step falling from 1 at `d1` to 0 at `d2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothBump {
    d1: f64,
    d2: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl SmoothBump {
    pub fn new(d1: f64, d2: f64) -> Result<Self, PotentialError> {
        if !(d1.is_finite() && d2.is_finite() && 0.0 < d1 && d1 < d2) {
            return Err(PotentialError::InvalidParameter(format!(
                "bump knots must satisfy 0 < d1 < d2, got ({d1}, {d2})"
            )));
        }
        let cube = (d1 - d2).powi(3);
        Ok(Self {
            d1,
            d2,
            a: -2.0 / cube,
            b: 3.0 * (d1 + d2) / cube,
            c: -6.0 * d1 * d2 / cube,
            d: d2 * d2 * (3.0 * d1 - d2) / cube,
        })
    }

    pub fn knots(&self) -> (f64, f64) {
        (self.d1, self.d2)
    }

    /// Cubic coefficients `(A, B, C, D)` of the middle branch.
    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        (self.a, self.b, self.c, self.d)
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= self.d1 {
            1.0
        } else if x >= self.d2 {
            0.0
        } else {
            ((self.a * x + self.b) * x + self.c) * x + self.d
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x <= self.d1 || x >= self.d2 {
            0.0
        } else {
            (3.0 * self.a * x + 2.0 * self.b) * x + self.c
        }
    }
}

/// Identity below 1 blended into the constant 1 by a circular arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatSmooth {
    eps: f64,
    x1: f64,
    x2: f64,
}

impl SatSmooth {
    pub fn new(eps: f64) -> Result<Self, PotentialError> {
        if !(eps > 0.0 && eps < 0.1) {
            return Err(PotentialError::InvalidParameter(format!(
                "saturation blend parameter must lie in (0, 0.1), got {eps}"
            )));
        }
        let x2 = 1.0 + eps / 67.5_f64.to_radians().tan();
        let x1 = x2 - 45.0_f64.to_radians().sin() * eps;
        Ok(Self { eps, x1, x2 })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn knots(&self) -> (f64, f64) {
        (self.x1, self.x2)
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= self.x1 {
            x
        } else if x <= self.x2 {
            let dx = x - self.x2;
            (1.0 - self.eps) + (self.eps * self.eps - dx * dx).max(0.0).sqrt()
        } else {
            1.0
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x <= self.x1 {
            1.0
        } else if x < self.x2 {
            let dx = x - self.x2;
            -dx / (self.eps * self.eps - dx * dx).sqrt()
        } else {
            0.0
        }
    }
}

/// Closed form of the line integral of `sat(k1 x, a)` from the origin to `y`.
pub fn line_integral_lyapunov(y: Vec2, k1: f64, a: f64) -> f64 {
    let r = y.norm();
    if k1 * r <= a {
        0.5 * k1 * r * r
    } else {
        a * a / (2.0 * k1) + a * (r - a / k1)
    }
}

/// Barrier `gain·σ(x; inner, outer) / ((1+ε)x − inner·s(x/inner))`, finite only for `x > inner`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barrier {
    gain: f64,
    inner: f64,
    eps: f64,
    bump: SmoothBump,
    sat: SatSmooth,
}

impl Barrier {
    pub fn new(gain: f64, inner: f64, outer: f64, eps: f64, eps_s: f64) -> Result<Self, PotentialError> {
        if !(gain > 0.0 && eps > 0.0) {
            return Err(PotentialError::InvalidParameter(
                "barrier gain and epsilon must be positive".into(),
            ));
        }
        Ok(Self {
            gain,
            inner,
            eps,
            bump: SmoothBump::new(inner, outer)?,
            sat: SatSmooth::new(eps_s)?,
        })
    }

    /// Agent-to-agent barrier with knots `2 r_s` and `r_a + r_s`.
    pub fn agent(params: &BarrierParams) -> Result<Self, PotentialError> {
        Self::new(
            params.k2,
            2.0 * params.r_s,
            params.r_a + params.r_s,
            params.eps_m,
            params.eps_s,
        )
    }

    /// Tube-keeping barrier with knots `r_s'` and `r_a`.
    pub fn tube(k3: f64, r_s_prime: f64, r_a: f64, eps_t: f64, eps_s: f64) -> Result<Self, PotentialError> {
        Self::new(k3, r_s_prime, r_a, eps_t, eps_s)
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.bump.d2
    }

    fn check(&self, x: f64) -> Result<(), PotentialError> {
        if x > self.inner {
            Ok(())
        } else {
            Err(PotentialError::DomainViolation {
                value: x,
                limit: self.inner,
            })
        }
    }

    fn denominator(&self, x: f64) -> f64 {
        (1.0 + self.eps) * x - self.inner * self.sat.value(x / self.inner)
    }

    pub fn value(&self, x: f64) -> Result<f64, PotentialError> {
        self.check(x)?;
        if x >= self.outer() {
            return Ok(0.0);
        }
        Ok(self.gain * self.bump.value(x) / self.denominator(x))
    }

    pub fn derivative(&self, x: f64) -> Result<f64, PotentialError> {
        self.check(x)?;
        if x >= self.outer() {
            return Ok(0.0);
        }
        let den = self.denominator(x);
        let den_prime = (1.0 + self.eps) - self.sat.derivative(x / self.inner);
        Ok(self.gain * (self.bump.derivative(x) * den - self.bump.value(x) * den_prime) / (den * den))
    }
}

/// Parameters of the agent-to-agent barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    pub k2: f64,
    pub r_s: f64,
    pub r_a: f64,
    pub eps_m: f64,
    pub eps_s: f64,
}

/// Agent barrier value at separation `dist`.
pub fn barrier_vm(dist: f64, params: &BarrierParams) -> Result<f64, PotentialError> {
    Barrier::agent(params)?.value(dist)
}

/// `b_ij = −V_m'(‖p_i − p_j‖) / ‖p_i − p_j‖`.
pub fn b_coefficient(p_i: Point2, p_j: Point2, params: &BarrierParams) -> Result<f64, PotentialError> {
    let barrier = Barrier::agent(params)?;
    let d = (p_i - p_j).norm();
    Ok(-barrier.derivative(d)? / d)
}

/// Tube barrier value and its derivative with respect to `d_t`.
pub fn barrier_vt(
    d_t: f64,
    r_s_prime: f64,
    r_a: f64,
    k3: f64,
    eps_t: f64,
    eps_s: f64,
) -> Result<(f64, f64), PotentialError> {
    let b = Barrier::tube(k3, r_s_prime, r_a, eps_t, eps_s)?;
    Ok((b.value(d_t)?, b.derivative(d_t)?))
}

fn gauss_legendre_rule(order: usize) -> Result<&'static [(f64, f64)], PotentialError> {
    static RULES: OnceLock<Mutex<HashMap<usize, &'static [(f64, f64)]>>> = OnceLock::new();
    let mut rules = RULES.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if let Some(rule) = rules.get(&order) {
        return Ok(rule);
    }
    let gl = GaussLegendre::new(order)
        .map_err(|e| PotentialError::InvalidParameter(format!("quadrature order {order}: {e}")))?;
    let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // enforce exact mirror symmetry of the rule
    let n = pairs.len();
    for k in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - k].0 - pairs[k].0);
        let w = 0.5 * (pairs[n - 1 - k].1 + pairs[k].1);
        pairs[k] = (-x, w);
        pairs[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let leaked: &'static [(f64, f64)] = Box::leak(pairs.into_boxed_slice());
    rules.insert(order, leaked);
    Ok(leaked)
}

/// Logarithmic source distribution along the segment `[a, b]` with threshold `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelField {
    pub a: Point2,
    pub b: Point2,
    pub d: f64,
    pub order: usize,
}

impl PanelField {
    pub fn new(a: Point2, b: Point2, d: f64) -> Self {
        Self {
            a,
            b,
            d,
            order: DEFAULT_PANEL_ORDER,
        }
    }

    /// Quadrature nodes along the panel as `(point, weight)` pairs.
    ///
    /// A sinh change of variables clusters the Gauss–Legendre nodes around the
    /// complex singularity of `ln(‖p − x(s)‖ − d)` nearest the panel, so the
    /// rule stays accurate for points close to the wall.
    fn nodes(&self, p: Point2) -> Result<Vec<(Point2, f64)>, PotentialError> {
        if self.order < 16 {
            return Err(PotentialError::InvalidParameter(format!(
                "panel quadrature order must be at least 16, got {}",
                self.order
            )));
        }
        let ab = self.b - self.a;
        let len = ab.norm();
        if len == 0.0 {
            return Err(PotentialError::InvalidParameter("panel has zero length".into()));
        }
        let margin = segment_distance(p, self.a, self.b) - self.d;
        if !(margin > LOG_FLOOR) {
            return Err(PotentialError::LogDomain { margin });
        }
        let u = ab / len;
        let s0 = u.dot(&(p - self.a));
        let h = (p - self.a - u * s0).norm();
        let half = 0.5 * len;
        let (centre, spread) = if h > self.d {
            (s0, (h * h - self.d * self.d).sqrt())
        } else {
            // singularities on the panel line itself, both beyond one end
            let c = (self.d * self.d - h * h).sqrt();
            let s_star = if s0 > len { s0 - c } else { s0 + c };
            (s_star, 0.0)
        };
        let eta = centre / half - 1.0;
        let eps = (spread / half).max(1e-10);
        let ap = ((1.0 + eta) / eps).asinh();
        let am = ((1.0 - eta) / eps).asinh();
        let mu = 0.5 * (ap + am);
        let nu = 0.5 * (ap - am);
        let rule = gauss_legendre_rule(self.order)?;
        Ok(rule
            .iter()
            .map(|&(t, w)| {
                let arg = mu * t - nu;
                let xi = (eta + eps * arg.sinh()).clamp(-1.0, 1.0);
                let jac = eps * mu * arg.cosh();
                (self.a + u * (half * (xi + 1.0)), w * jac * half)
            })
            .collect())
    }

    /// `φ(p) = ∫ ln(‖p − x(s)‖ − d) ds` over the panel.
    pub fn potential(&self, p: Point2) -> Result<f64, PotentialError> {
        Ok(self
            .nodes(p)?
            .into_iter()
            .map(|(x, w)| w * ((p - x).norm() - self.d).ln())
            .sum())
    }

    /// `∇φ(p)`, differentiated under the integral sign.
    pub fn gradient(&self, p: Point2) -> Result<Vec2, PotentialError> {
        Ok(self
            .nodes(p)?
            .into_iter()
            .map(|(x, w)| {
                let diff = p - x;
                let r = diff.norm();
                diff * (w / (r * (r - self.d)))
            })
            .sum())
    }
}

pub fn panel_potential(p: Point2, field: &PanelField) -> Result<f64, PotentialError> {
    field.potential(p)
}

pub fn panel_gradient(p: Point2, field: &PanelField) -> Result<Vec2, PotentialError> {
    field.gradient(p)
}

/// Leg panels lengthened beyond the starting base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedBoundary {
    pub p_fle: Point2,
    pub p_sle: Point2,
    pub p_fre: Point2,
    pub p_sre: Point2,
    pub lambda: f64,
    pub d: f64,
    pub order: usize,
}

impl ExtendedBoundary {
    /// Extends each leg beyond its starting vertex by `lambda` leg lengths.
    pub fn with_factor(tube: &TrapezoidTube, lambda: f64, d: f64) -> Self {
        Self {
            p_fle: tube.p_fl(),
            p_sle: tube.p_sl() + (tube.p_sl() - tube.p_fl()) * lambda,
            p_fre: tube.p_fr(),
            p_sre: tube.p_sr() + (tube.p_sr() - tube.p_fr()) * lambda,
            lambda,
            d,
            order: DEFAULT_PANEL_ORDER,
        }
    }

    pub fn left_panel(&self) -> PanelField {
        PanelField {
            a: self.p_sle,
            b: self.p_fle,
            d: self.d,
            order: self.order,
        }
    }

    pub fn right_panel(&self) -> PanelField {
        PanelField {
            a: self.p_sre,
            b: self.p_fre,
            d: self.d,
            order: self.order,
        }
    }

    /// Gradients `(∂V_tl/∂p, ∂V_tr/∂p)` of the wall barriers `−k3·φ`.
    pub fn wall_gradients(&self, p: Point2, k3: f64) -> Result<(Vec2, Vec2), PotentialError> {
        Ok((
            -self.left_panel().gradient(p)? * k3,
            -self.right_panel().gradient(p)? * k3,
        ))
    }

    /// Sum of both wall barriers at `p`.
    pub fn wall_potential(&self, p: Point2, k3: f64) -> Result<f64, PotentialError> {
        Ok(-k3 * (self.left_panel().potential(p)? + self.right_panel().potential(p)?))
    }

    /// Smallest forward projection `t_c · (−∇V)` of either wall field over the grid.
    pub fn min_forward_projection(&self, tube: &TrapezoidTube, grid: &[Point2]) -> Result<f64, PotentialError> {
        let t = tube.t_c();
        let mut worst = f64::INFINITY;
        for &p in grid {
            let (gl, gr) = self.wall_gradients(p, 1.0)?;
            worst = worst.min(-t.dot(&gl)).min(-t.dot(&gr));
        }
        Ok(worst)
    }
}

/// `n × n` grid over the part of the tube where both panel potentials are defined.
///
/// Axial nodes run from the starting base to the finishing base; at each level
/// the lateral nodes span the points whose distance to either leg line is at
/// least `d·(1 + 1e-3)`.
pub fn interior_grid(tube: &TrapezoidTube, d: f64, n: usize) -> Vec<Point2> {
    let keep = d * (1.0 + 1e-3) + 1e-9;
    let mut pts = Vec::with_capacity(n * n);
    let denom = (n.max(2) - 1) as f64;
    for i in 0..n {
        let level = tube.p_sr() + tube.t_c() * (tube.length() * i as f64 / denom);
        let s = tube.section_at(level);
        let span = s.p_r - s.p_l;
        // leg-line distances are affine in the lateral fraction
        let dl0 = tube.n_l().dot(&(s.p_l - tube.p_fl()));
        let dl1 = tube.n_l().dot(&(s.p_r - tube.p_fl()));
        let dr0 = tube.n_r().dot(&(s.p_l - tube.p_fr()));
        let dr1 = tube.n_r().dot(&(s.p_r - tube.p_fr()));
        let w_lo = (keep - dl0) / (dl1 - dl0);
        let w_hi = (keep - dr0) / (dr1 - dr0);
        if !(w_lo < w_hi) {
            continue;
        }
        for j in 0..n {
            let w = w_lo + (w_hi - w_lo) * j as f64 / denom;
            pts.push(s.p_l + span * w);
        }
    }
    pts
}

/// Doubles the extension factor from `lambda0` until the wall fields never push backward on the grid.
pub fn extend_boundaries(tube: &TrapezoidTube, lambda0: f64, d: f64) -> Result<ExtendedBoundary, PotentialError> {
    if !(lambda0 >= 1.0) {
        return Err(PotentialError::InvalidParameter(format!(
            "extension factor must be at least 1, got {lambda0}"
        )));
    }
    let grid = interior_grid(tube, d, DIRECTION_GRID);
    let mut lambda = lambda0;
    loop {
        let ext = ExtendedBoundary::with_factor(tube, lambda, d);
        if ext.min_forward_projection(tube, &grid)? >= DIRECTION_SLACK {
            return Ok(ext);
        }
        if lambda >= MAX_EXTENSION {
            return Err(PotentialError::ConstraintUnsatisfiable { lambda });
        }
        lambda = (lambda * 2.0).min(MAX_EXTENSION);
    }
}

/// Tube-keeping state at one point: clearance, barrier slope and the gradient `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeepingTerm {
    pub d_t: f64,
    pub slope: f64,
    /// `c = ∂V_t/∂p`.
    pub gradient: Vec2,
    /// `(I − P_t) c`, exactly orthogonal to the tube axis.
    pub projected: Vec2,
}

/// Evaluates the tube-keeping barrier gradient and its lateral projection at `p`.
pub fn keeping_term(tube: &TrapezoidTube, p: Point2, barrier: &Barrier) -> Result<KeepingTerm, PotentialError> {
    let s = tube.section_at(p);
    let offset = p - s.m;
    let dist = offset.norm();
    let d_t = s.r_t - dist;
    let slope = barrier.derivative(d_t)?;
    if slope == 0.0 {
        return Ok(KeepingTerm {
            d_t,
            slope,
            gradient: Vec2::zeros(),
            projected: Vec2::zeros(),
        });
    }
    let t = tube.t_c();
    let grad_centre = if dist > 0.0 {
        let u = offset / dist;
        u - t * tube.midpoint_rate().dot(&u)
    } else {
        Vec2::zeros()
    };
    let gradient = (tube.half_width_gradient() - grad_centre) * slope;
    let e = tube.lateral();
    Ok(KeepingTerm {
        d_t,
        slope,
        gradient,
        projected: e * e.dot(&gradient),
    })
}

/// `(I − P_t) c` for the tube barrier with knots `r_s'` and `r_a`.
pub fn modified_keeping_term(tube: &TrapezoidTube, p: Point2, barrier: &Barrier) -> Result<Vec2, PotentialError> {
    Ok(keeping_term(tube, p, barrier)?.projected)
}
