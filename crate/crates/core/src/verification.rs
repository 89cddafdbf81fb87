//! Independent oracles backing the analytic constructions.
//!
//! Nothing here calls the formula it is checking: gradients are compared with
//! central differences, closed forms with adaptive quadrature, and the
//! revised-radius test with distances computed straight from the vertices.

use rand::Rng;
use thiserror::Error;

use crate::controller::{ControllerParams, Logic};
use crate::geometry::{Point2, QuadrangleChain, TrapezoidTube, Vec2};
use crate::potentials::{b_coefficient, barrier_vm, barrier_vt, interior_grid, keeping_term, Barrier, ExtendedBoundary};
use crate::simulator::SimulationTrace;

/// Every oracle tolerance in one place.
pub mod tolerances {
    /// Relative agreement of analytic gradients with central differences.
    pub const GRADIENT_REL: f64 = 1e-5;
    /// Central-difference step.
    pub const FD_STEP: f64 = 1e-6;
    /// Closed form versus numerical quadrature.
    pub const QUADRATURE: f64 = 1e-8;
    /// Width of the ignored band around geometric thresholds.
    pub const GEOMETRY_BAND: f64 = 1e-9;
    /// Smallest accepted forward projection of a wall field.
    pub const DIRECTION_SLACK: f64 = -1e-12;
    /// Largest accepted discrete `V̇`.
    pub const LYAPUNOV_VDOT: f64 = 1e-6;
    /// Residual axial component of the projected keeping term.
    pub const ORTHOGONALITY: f64 = 1e-12;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerificationError {
    #[error("function is not finite near {0:?}")]
    NonFinite(Point2),
    #[error("trace was produced by logic {0:?}; the check needs the gradient-form single-trapezoid logic")]
    WrongLogic(Logic),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub worst_input: String,
    pub pass: bool,
    pub note: String,
}

impl OracleReport {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cases: 0,
            failures: 0,
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            worst_input: String::new(),
            pass: true,
            note: String::new(),
        }
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "oracle={} status={} cases={} failures={} max_abs={:.3e} max_rel={:.3e}",
            self.name,
            if self.pass { "pass" } else { "fail" },
            self.cases,
            self.failures,
            self.max_abs_error,
            self.max_rel_error
        )?;
        if !self.worst_input.is_empty() {
            write!(f, " worst=\"{}\"", self.worst_input)?;
        }
        if !self.note.is_empty() {
            write!(f, " note=\"{}\"", self.note)?;
        }
        Ok(())
    }
}

/// Central-difference gradient of a scalar field.
pub fn fd_gradient_oracle<F>(f: F, p: Point2, step: f64) -> Result<Vec2, VerificationError>
where
    F: Fn(Point2) -> Option<f64>,
{
    let mut g = Vec2::zeros();
    for k in 0..2 {
        let mut e = Vec2::zeros();
        e[k] = step;
        let (hi, lo) = match (f(p + e), f(p - e)) {
            (Some(hi), Some(lo)) if hi.is_finite() && lo.is_finite() => (hi, lo),
            _ => return Err(VerificationError::NonFinite(p)),
        };
        g[k] = (hi - lo) / (2.0 * step);
    }
    Ok(g)
}

/// Central difference of a scalar function of one variable.
pub fn fd_derivative<F>(f: F, x: f64, step: f64) -> Option<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    let d = (f(x + step)? - f(x - step)?) / (2.0 * step);
    d.is_finite().then_some(d)
}

/// Accumulates one analytic-versus-reference comparison into a report.
pub fn record_vector(report: &mut OracleReport, analytic: Vec2, reference: Vec2, input: impl FnOnce() -> String) {
    let abs = (analytic - reference).norm();
    let rel = abs / reference.norm().max(analytic.norm()).max(1e-300);
    report.cases += 1;
    let failed = rel > tolerances::GRADIENT_REL;
    if failed {
        report.failures += 1;
        report.pass = false;
    }
    if rel > report.max_rel_error || (failed && report.worst_input.is_empty()) {
        report.worst_input = input();
    }
    report.max_abs_error = report.max_abs_error.max(abs);
    report.max_rel_error = report.max_rel_error.max(rel);
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Line integral of `sat(k1·x, a)` along the polyline `path`, by quadrature.
pub fn line_integral_by_quadrature(path: &[Vec2], k1: f64, a: f64) -> f64 {
    let field = |x: Vec2| {
        let v = x * k1;
        let n = v.norm();
        if n <= a {
            v
        } else {
            v * (a / n)
        }
    };
    path.windows(2)
        .map(|w| {
            let (u, dir) = (w[0], w[1] - w[0]);
            let g = |tau: f64| field(u + dir * tau).dot(&dir);
            // split at the saturation kink so each piece is smooth
            let mut cuts = vec![0.0, 1.0];
            let (qa, qb, qc) = (dir.norm_squared(), 2.0 * u.dot(&dir), u.norm_squared() - (a / k1).powi(2));
            let disc = qb * qb - 4.0 * qa * qc;
            if qa > 0.0 && disc > 0.0 {
                for r in [(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)] {
                    if r > 0.0 && r < 1.0 {
                        cuts.push(r);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.windows(2).map(|c| adaptive_simpson(&g, c[0], c[1], 1e-13)).sum::<f64>()
        })
        .sum()
}

/// Distances from `p` to the two leg lines of the trapezoid with the given vertices.
fn leg_line_distances(v: &[Point2; 4], p: Point2) -> (f64, f64) {
    let [fr, fl, sl, sr] = *v;
    let dist = |a: Point2, b: Point2| {
        let d = b - a;
        ((p - a).x * d.y - (p - a).y * d.x).abs() / d.norm()
    };
    (dist(fl, sl), dist(fr, sr))
}

fn inside_convex(v: &[Point2; 4], p: Point2) -> bool {
    (0..4).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % 4];
        (b - a).x * (p - a).y - (b - a).y * (p - a).x >= 0.0
    })
}

/// Uniform samples inside a convex counter-clockwise quadrilateral.
pub fn sample_inside<R: Rng>(v: &[Point2; 4], n: usize, rng: &mut R) -> Vec<Point2> {
    let (lo, hi) = v.iter().fold((v[0], v[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if inside_convex(v, p) {
            out.push(p);
        }
    }
    out
}

/// Counts of the two ways the revised-radius predicate can disagree with true clearance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Prop1Counts {
    /// Section test passes although a leg is within `r_s`.
    pub unsafe_: usize,
    /// Section test fails although both legs are farther than `r_s`.
    pub conservative: usize,
}

/// Compares `d_t > r_s'` with `dist(p, legs) > r_s` on sampled interior points.
///
/// `r_s_prime` is normally [`TrapezoidTube::revised_safety_radius`]; passing
/// another value is how the negative control is run.
pub fn prop1_oracle_with<R: Rng>(
    tube: &TrapezoidTube,
    r_s: f64,
    r_s_prime: f64,
    n_samples: usize,
    rng: &mut R,
) -> (OracleReport, Prop1Counts) {
    let verts = tube.vertices();
    let band = tolerances::GEOMETRY_BAND;
    let mut report = OracleReport::new("revised_safety_radius");
    let mut counts = Prop1Counts::default();
    for p in sample_inside(&verts, n_samples, rng) {
        let d_t = tube.section_clearance(p);
        let (dl, dr) = leg_line_distances(&verts, p);
        let dist = dl.min(dr);
        report.cases += 1;
        if (d_t - r_s_prime).abs() <= band || (dist - r_s).abs() <= band {
            continue;
        }
        let lhs = d_t > r_s_prime;
        let rhs = dist > r_s;
        if lhs != rhs {
            if lhs {
                counts.unsafe_ += 1;
            } else {
                counts.conservative += 1;
            }
            let gap = (dist - r_s).abs();
            if gap > report.max_abs_error {
                report.max_abs_error = gap;
                report.worst_input = format!("p=({:.6},{:.6}) d_t={d_t:.6} dist={dist:.6}", p.x, p.y);
            }
        }
    }
    report.failures = counts.unsafe_ + counts.conservative;
    report.pass = report.failures == 0;
    report.note = format!(
        "unsafe={} conservative={} r_s={r_s} r_s'={r_s_prime:.6}",
        counts.unsafe_, counts.conservative
    );
    (report, counts)
}

pub fn prop1_oracle<R: Rng>(tube: &TrapezoidTube, r_s: f64, n_samples: usize, rng: &mut R) -> (OracleReport, Prop1Counts) {
    let r_s_prime = tube
        .revised_safety_radius(r_s)
        .expect("tube legs are not orthogonal to its axis");
    prop1_oracle_with(tube, r_s, r_s_prime, n_samples, rng)
}

/// Evaluates both wall fields' forward projections on an `n × n` interior grid.
pub fn direction_constraint_sampler(tube: &TrapezoidTube, extended: &ExtendedBoundary, n: usize) -> OracleReport {
    let mut report = OracleReport::new("direction_constraints");
    let t = tube.t_c();
    let mut worst = f64::INFINITY;
    for p in interior_grid(tube, extended.d, n) {
        report.cases += 1;
        let projections = [extended.left_panel(), extended.right_panel()].map(|panel| panel.gradient(p).map(|g| t.dot(&g)));
        for proj in projections {
            match proj {
                Ok(v) => {
                    if v < tolerances::DIRECTION_SLACK {
                        report.failures += 1;
                    }
                    if v < worst {
                        worst = v;
                        report.worst_input = format!("p=({:.6},{:.6}) projection={v:.3e}", p.x, p.y);
                    }
                }
                Err(e) => {
                    report.failures += 1;
                    report.worst_input = format!("p=({:.6},{:.6}) {e}", p.x, p.y);
                }
            }
        }
    }
    report.max_abs_error = if worst < 0.0 { -worst } else { 0.0 };
    report.pass = report.failures == 0 && report.cases > 0;
    report.note = format!("lambda={} min_projection={worst:.3e}", extended.lambda);
    report
}

/// Passes iff every sampled discrete `V̇` is at most the tolerance.
pub fn lyapunov_monotonicity_check(trace: &SimulationTrace) -> Result<OracleReport, VerificationError> {
    if trace.logic != Logic::SingleTrapezoidV1 {
        return Err(VerificationError::WrongLogic(trace.logic));
    }
    let mut report = OracleReport::new("lyapunov_monotonicity");
    let mut worst = f64::NEG_INFINITY;
    for s in &trace.lyapunov {
        report.cases += 1;
        if s.v_dot > tolerances::LYAPUNOV_VDOT {
            report.failures += 1;
        }
        if s.v_dot > worst {
            worst = s.v_dot;
            report.worst_input = format!("t={:.3} V={:.6} dV/dt={:.3e}", s.t, s.v, s.v_dot);
        }
    }
    report.max_abs_error = worst.max(0.0);
    report.pass = report.failures == 0 && report.cases > 0;
    Ok(report)
}

/// Fraction of a barrier band kept clear at each knot when sampling states.
///
/// At the inner knot the barrier diverges; at the outer one its derivative
/// vanishes, and a relative comparison there measures difference roundoff
/// rather than the formula.
const KNOT_MARGIN: f64 = 1e-3;

/// Checks the four analytic derivatives of the controller against central differences.
///
/// States are drawn inside `tube` (and near it for the agent pair term). When
/// `extended` is given the raw panel potentials of both walls are checked as well.
/// Returns one report per derivative, in the order agent coefficient, panel,
/// tube barrier, keeping gradient.
pub fn gradient_suite<R: Rng>(
    params: &ControllerParams,
    tube: &TrapezoidTube,
    extended: Option<&ExtendedBoundary>,
    n: usize,
    rng: &mut R,
) -> Vec<OracleReport> {
    let h = tolerances::FD_STEP;
    let verts = tube.vertices();
    let mut reports = Vec::new();

    let bp = params.barrier_params();
    let mut rep = OracleReport::new("b_coefficient");
    for p_i in sample_inside(&verts, n, rng) {
        let m = KNOT_MARGIN * (bp.r_a - bp.r_s);
        let dist = rng.random_range(2.0 * bp.r_s + m..bp.r_a + bp.r_s - m);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let p_j = p_i + Vec2::new(angle.cos(), angle.sin()) * dist;
        let fd = fd_gradient_oracle(|x| barrier_vm((x - p_j).norm(), &bp).ok(), p_i, h);
        match (b_coefficient(p_i, p_j, &bp), fd) {
            (Ok(b), Ok(fd)) => record_vector(&mut rep, -(p_i - p_j) * b, fd, || format!("dist={dist:.9}")),
            _ => fail_case(&mut rep, format!("dist={dist:.9} outside the barrier domain")),
        }
    }
    reports.push(rep);

    if let Some(ext) = extended {
        let mut rep = OracleReport::new("panel_gradient");
        let panels = [ext.left_panel(), ext.right_panel()];
        let mut k = 0;
        while rep.cases < n {
            let p = sample_inside(&verts, 1, rng)[0];
            if tube.leg_line_distance(p) <= ext.d * (1.0 + KNOT_MARGIN) {
                continue;
            }
            let panel = &panels[k % 2];
            k += 1;
            match (panel.gradient(p), fd_gradient_oracle(|x| panel.potential(x).ok(), p, h)) {
                (Ok(g), Ok(fd)) => record_vector(&mut rep, g, fd, || format!("p=({:.6},{:.6})", p.x, p.y)),
                _ => fail_case(&mut rep, format!("p=({:.6},{:.6}) not evaluable", p.x, p.y)),
            }
        }
        reports.push(rep);
    }

    let r_prime = match tube.revised_safety_radius(params.r_s) {
        Ok(r) => r,
        Err(e) => {
            let mut rep = OracleReport::new("barrier_vt");
            fail_case(&mut rep, e.to_string());
            reports.push(rep);
            return reports;
        }
    };
    let mut rep = OracleReport::new("barrier_vt");
    for _ in 0..n {
        let m = KNOT_MARGIN * (params.r_a - r_prime);
        let d = rng.random_range(r_prime + m..params.r_a - m);
        let vt = |x: f64| barrier_vt(x, r_prime, params.r_a, params.k3, params.eps_t, params.eps_s).ok();
        match (vt(d), fd_derivative(|x| vt(x).map(|v| v.0), d, h)) {
            (Some((_, slope)), Some(fd)) => {
                record_vector(&mut rep, Vec2::new(slope, 0.0), Vec2::new(fd, 0.0), || format!("d_t={d:.9}"))
            }
            _ => fail_case(&mut rep, format!("d_t={d:.9} outside the barrier domain")),
        }
    }
    reports.push(rep);

    let mut rep = OracleReport::new("keeping_gradient");
    match Barrier::tube(params.k3, r_prime, params.r_a, params.eps_t, params.eps_s) {
        Ok(barrier) => {
            // the clearance is not differentiable on the centre line, and the
            // term is identically zero once the clearance reaches r_a
            let mut tries = 0;
            while rep.cases < n && tries < 1000 * n {
                tries += 1;
                let p = sample_inside(&verts, 1, rng)[0];
                let s = tube.section_at(p);
                let d_t = tube.section_clearance(p);
                let m = KNOT_MARGIN * (params.r_a - r_prime);
                if d_t <= r_prime + m || d_t >= params.r_a - m || (p - s.m).norm() < KNOT_MARGIN {
                    continue;
                }
                let fd = fd_gradient_oracle(|x| barrier.value(tube.section_clearance(x)).ok(), p, h);
                match (keeping_term(tube, p, &barrier), fd) {
                    (Ok(k), Ok(fd)) => record_vector(&mut rep, k.gradient, fd, || format!("p=({:.6},{:.6})", p.x, p.y)),
                    _ => fail_case(&mut rep, format!("p=({:.6},{:.6}) not evaluable", p.x, p.y)),
                }
            }
            if rep.cases == 0 {
                rep.note = "no interior point has clearance inside the barrier band".into();
            }
        }
        Err(e) => fail_case(&mut rep, e.to_string()),
    }
    reports.push(rep);
    reports
}

fn fail_case(report: &mut OracleReport, input: String) {
    report.cases += 1;
    report.failures += 1;
    report.pass = false;
    if report.worst_input.is_empty() {
        report.worst_input = input;
    }
}

/// A random trapezoid with unit-scale bases, arbitrary pose, and legs no flatter than 70° off the axis.
pub fn random_trapezoid<R: Rng>(rng: &mut R) -> TrapezoidTube {
    loop {
        let h = rng.random_range(2.0..8.0);
        let start = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
        let finish = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
        let shift = rng.random_range(-1.5..1.5);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let origin = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (s, c) = angle.sin_cos();
        let place = |x: f64, y: f64| origin + Vec2::new(c * x - s * y, s * x + c * y);
        let tube = TrapezoidTube::new(
            place(finish.1 + shift, h),
            place(-finish.0 + shift, h),
            place(-start.0, 0.0),
            place(start.1, 0.0),
        );
        if let Ok(t) = tube {
            let (cl, cr) = t.leg_cosines();
            if cl.min(cr) > 0.35 {
                return t;
            }
        }
    }
}

/// Random three-quadrangle chain whose joint between quadrangles 1 and 2 is straight.
pub fn random_colinear_chain<R: Rng>(rng: &mut R) -> QuadrangleChain {
    loop {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let t = Vec2::new(angle.cos(), angle.sin());
        let e = Vec2::new(-t.y, t.x);
        let origin = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let mut centre = origin;
        let mut bases = Vec::new();
        for _ in 0..3 {
            let (wl, wr) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
            bases.push((centre - e * wr, centre + e * wl));
            centre += t * rng.random_range(3.0..8.0) + e * rng.random_range(-0.5..0.5);
        }
        // last base turned by a modest angle
        let turn: f64 = rng.random_range(-0.4..0.4);
        let t3 = Vec2::new(t.x * turn.cos() - t.y * turn.sin(), t.x * turn.sin() + t.y * turn.cos());
        let e3 = Vec2::new(-t3.y, t3.x);
        let w = rng.random_range(1.0..3.0);
        bases.push((centre - e3 * w, centre + e3 * w));
        if let Ok(chain) = QuadrangleChain::new(bases) {
            return chain;
        }
    }
}
