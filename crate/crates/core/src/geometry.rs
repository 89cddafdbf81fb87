//! Planar constructions for trapezoid and connected-quadrangle virtual tubes.
//!
//! Orientation convention used throughout the crate: the tube axis `t_c`
//! points from the starting base toward the finishing base, so every
//! interior point `x` satisfies `t_c · (x - p_fr) <= 0`. "Left" is the
//! counter-clockwise side of `t_c`.
//!
//! Quadrangle indices are 1-based (`1..=N`) and base indices 0-based
//! (`0..=N`), matching the usual numbering of a chain: quadrangle `q` is
//! bounded by base `q - 1` (start) and base `q` (finish).

use nalgebra::Vector2;
use thiserror::Error;

pub type Point2 = Vector2<f64>;
pub type Vec2 = Vector2<f64>;

/// Largest angle (rad) between two bases that still counts as parallel.
pub const PARALLEL_TOL_RAD: f64 = 1e-6;
/// Two tube axes closer than this (rad) are treated as identical.
pub const SAME_AXIS_TOL_RAD: f64 = 1e-9;
/// Smallest admissible polygon area (m²).
pub const MIN_AREA: f64 = 1e-12;

const BOUNDARY_TOL: f64 = 1e-12;
const MIN_EDGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("tube bases are not parallel (angle {0:.3e} rad)")]
    NonParallelBases(f64),
    #[error("degenerate tube: {0}")]
    DegenerateTube(&'static str),
    #[error("point is outside the base-to-base slab of the tube")]
    OutOfSlab,
    #[error("point is outside the tube")]
    OutsideTube,
    #[error("leg is (nearly) orthogonal to the tube axis, min cos = {0:.3e}")]
    DegenerateLegAngle(f64),
    #[error("quadrangle index {0} out of range")]
    InvalidIndex(usize),
    #[error("invalid quadrangle chain: {0}")]
    InvalidChain(String),
}

/// Counter-clockwise rotation by 90°.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Unsigned angle between two nonzero vectors, in `[0, π]`.
pub fn angle_between(a: Vec2, b: Vec2) -> f64 {
    cross(a, b).atan2(a.dot(&b)).abs()
}

/// Axis pointing "forward" for a base running from its right end to its left end.
fn axis_of_base(p_right: Point2, p_left: Point2) -> Vec2 {
    let e = (p_left - p_right).normalize();
    Vec2::new(e.y, -e.x)
}

fn polygon_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| cross(vertices[i], vertices[(i + 1) % n]))
        .sum::<f64>()
}

/// Point-in-convex-polygon for counter-clockwise vertices, boundary inclusive.
fn convex_contains(vertices: &[Point2], x: Point2) -> bool {
    let n = vertices.len();
    (0..n).all(|i| {
        let a = vertices[i];
        let edge = vertices[(i + 1) % n] - a;
        cross(edge, x - a) >= -BOUNDARY_TOL * edge.norm().max(1.0)
    })
}

fn is_strictly_convex_ccw(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    (0..n).all(|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        cross(b - a, c - b) > MIN_AREA
    })
}

/// Separating-axis test; touching polygons count as overlapping.
fn convex_overlap(a: &[Point2], b: &[Point2]) -> bool {
    let project = |poly: &[Point2], axis: Vec2| {
        poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let s = axis.dot(p);
            (lo.min(s), hi.max(s))
        })
    };
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let axis = perp(poly[(i + 1) % n] - poly[i]).normalize();
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            if amax < bmin - BOUNDARY_TOL || bmax < amin - BOUNDARY_TOL {
                return false;
            }
        }
    }
    true
}

/// Intersection of the line through `origin` along `dir` with the level set `axis · x = level`.
fn line_at_level(origin: Point2, dir: Vec2, axis: Vec2, level: f64) -> Point2 {
    origin + dir * ((level - axis.dot(&origin)) / axis.dot(&dir))
}

/// A trapezoid virtual tube with derived axis and inward leg normals.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapezoidTube {
    p_fr: Point2,
    p_fl: Point2,
    p_sl: Point2,
    p_sr: Point2,
    t_c: Vec2,
    n_l: Vec2,
    n_r: Vec2,
    // d p_l / d(t_c · p) and d p_r / d(t_c · p)
    left_rate: Vec2,
    right_rate: Vec2,
}

/// Section of a tube orthogonal to its axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSection {
    pub p_l: Point2,
    pub p_r: Point2,
    pub r_t: f64,
    pub m: Point2,
}

impl TrapezoidTube {
    pub fn new(p_fr: Point2, p_fl: Point2, p_sl: Point2, p_sr: Point2) -> Result<Self, GeometryError> {
        let pts = [p_fr, p_fl, p_sl, p_sr];
        if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::DegenerateTube("non-finite vertex"));
        }
        let finish = p_fl - p_fr;
        let start = p_sl - p_sr;
        if finish.norm() < MIN_EDGE || start.norm() < MIN_EDGE {
            return Err(GeometryError::DegenerateTube("zero-length base"));
        }
        let base_angle = angle_between(finish, start);
        if base_angle > PARALLEL_TOL_RAD {
            if std::f64::consts::PI - base_angle <= PARALLEL_TOL_RAD {
                return Err(GeometryError::DegenerateTube("crossing legs"));
            }
            return Err(GeometryError::NonParallelBases(base_angle));
        }
        let t_c = axis_of_base(p_fr, p_fl);
        if t_c.dot(&(p_fr - p_sr)) <= MIN_EDGE || t_c.dot(&(p_fl - p_sl)) <= MIN_EDGE {
            return Err(GeometryError::DegenerateTube(
                "starting base is not behind the finishing base",
            ));
        }
        let dl = p_sl - p_fl;
        let dr = p_sr - p_fr;
        if dl.norm() < MIN_EDGE || dr.norm() < MIN_EDGE {
            return Err(GeometryError::DegenerateTube("zero-length leg"));
        }
        let centroid = (p_fr + p_fl + p_sl + p_sr) / 4.0;
        let mut n_l = perp(dl).normalize();
        if n_l.dot(&(centroid - p_fl)) < 0.0 {
            n_l = -n_l;
        }
        let mut n_r = perp(dr).normalize();
        if n_r.dot(&(centroid - p_fr)) < 0.0 {
            n_r = -n_r;
        }
        let ccw = [p_fr, p_fl, p_sl, p_sr];
        if !is_strictly_convex_ccw(&ccw) || polygon_area(&ccw) <= MIN_AREA {
            return Err(GeometryError::DegenerateTube("crossing legs or zero area"));
        }
        Ok(Self {
            p_fr,
            p_fl,
            p_sl,
            p_sr,
            t_c,
            n_l,
            n_r,
            left_rate: dl / t_c.dot(&dl),
            right_rate: dr / t_c.dot(&dr),
        })
    }

    pub fn p_fr(&self) -> Point2 {
        self.p_fr
    }
    pub fn p_fl(&self) -> Point2 {
        self.p_fl
    }
    pub fn p_sl(&self) -> Point2 {
        self.p_sl
    }
    pub fn p_sr(&self) -> Point2 {
        self.p_sr
    }
    /// Unit axis, pointing from the starting base toward the finishing base.
    pub fn t_c(&self) -> Vec2 {
        self.t_c
    }
    pub fn n_l(&self) -> Vec2 {
        self.n_l
    }
    pub fn n_r(&self) -> Vec2 {
        self.n_r
    }
    /// Unit lateral direction pointing to the left of the axis.
    pub fn lateral(&self) -> Vec2 {
        perp(self.t_c)
    }

    /// Vertices in counter-clockwise order: finishing-right, finishing-left, starting-left, starting-right.
    pub fn vertices(&self) -> [Point2; 4] {
        [self.p_fr, self.p_fl, self.p_sl, self.p_sr]
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices())
    }

    /// Distance between the two bases along the axis.
    pub fn length(&self) -> f64 {
        self.t_c.dot(&(self.p_fr - self.p_sr))
    }

    /// Signed axial offset of `p` from the finishing line (negative behind it).
    pub fn axial_offset(&self, p: Point2) -> f64 {
        self.t_c.dot(&(p - self.p_fr))
    }

    /// Half-plane membership test; boundary points count as inside.
    pub fn contains(&self, x: Point2) -> bool {
        let tol = BOUNDARY_TOL;
        self.n_l.dot(&(x - self.p_fl)) >= -tol
            && self.n_r.dot(&(x - self.p_fr)) >= -tol
            && self.t_c.dot(&(x - self.p_fr)) <= tol
            && self.t_c.dot(&(x - self.p_sr)) >= -tol
    }

    /// True when `x` lies between the two leg lines, ignoring the bases.
    pub fn within_legs(&self, x: Point2) -> bool {
        self.n_l.dot(&(x - self.p_fl)) >= -BOUNDARY_TOL && self.n_r.dot(&(x - self.p_fr)) >= -BOUNDARY_TOL
    }

    /// Section through `p` orthogonal to the axis, extended affinely beyond the bases.
    pub fn section_at(&self, p: Point2) -> CrossSection {
        let p_l = self.p_fl + self.left_rate * self.t_c.dot(&(p - self.p_fl));
        let p_r = self.p_fr + self.right_rate * self.t_c.dot(&(p - self.p_fr));
        CrossSection {
            p_l,
            p_r,
            r_t: 0.5 * (p_r - p_l).norm(),
            m: 0.5 * (p_l + p_r),
        }
    }

    pub fn cross_section(&self, p: Point2) -> Result<CrossSection, GeometryError> {
        let scale = 1.0 + self.length();
        if self.t_c.dot(&(p - self.p_fr)) > BOUNDARY_TOL * scale
            || self.t_c.dot(&(p - self.p_sr)) < -BOUNDARY_TOL * scale
        {
            return Err(GeometryError::OutOfSlab);
        }
        Ok(self.section_at(p))
    }

    /// Half-width of the tube, `inf r_t(p)`; attained at one of the bases.
    pub fn width(&self) -> f64 {
        self.section_at(self.p_fr).r_t.min(self.section_at(self.p_sr).r_t)
    }

    /// Gradient of the half-width `r_t(p)`; parallel to the axis.
    pub fn half_width_gradient(&self) -> Vec2 {
        self.t_c * (0.5 * self.lateral().dot(&(self.left_rate - self.right_rate)))
    }

    /// Jacobian of the section midpoint `m(p)`, `∂m/∂p = midpoint_rate · t_cᵀ`.
    pub fn midpoint_rate(&self) -> Vec2 {
        0.5 * (self.left_rate + self.right_rate)
    }

    /// Clearance measured along the section, `r_t(p) - ‖p - m(p)‖`.
    pub fn section_clearance(&self, p: Point2) -> f64 {
        let s = self.section_at(p);
        s.r_t - (p - s.m).norm()
    }

    /// Euclidean distance from an interior point to the nearer leg line.
    pub fn boundary_distance(&self, p: Point2) -> Result<f64, GeometryError> {
        if !self.contains(p) {
            return Err(GeometryError::OutsideTube);
        }
        Ok(self.leg_line_distance(p))
    }

    /// Signed distance to the nearer leg line (positive inside), without containment checks.
    pub fn leg_line_distance(&self, p: Point2) -> f64 {
        self.n_l
            .dot(&(p - self.p_fl))
            .min(self.n_r.dot(&(p - self.p_fr)))
    }

    /// Cosines of the angles between each leg and the reversed axis, `(left, right)`.
    pub fn leg_cosines(&self) -> (f64, f64) {
        let dl = self.p_sl - self.p_fl;
        let dr = self.p_sr - self.p_fr;
        (
            -self.t_c.dot(&dl) / dl.norm(),
            -self.t_c.dot(&dr) / dr.norm(),
        )
    }

    /// Safety radius inflated so that a section-clearance test implies Euclidean clearance.
    pub fn revised_safety_radius(&self, r_s: f64) -> Result<f64, GeometryError> {
        let (cl, cr) = self.leg_cosines();
        let c = cl.min(cr);
        if c <= 1e-9 {
            return Err(GeometryError::DegenerateLegAngle(c));
        }
        Ok(r_s / c)
    }
}

/// Which control region of a quadrangle a point falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Inside the inscribed trapezoid of quadrangle `q`.
    Inscribed(usize),
    /// Inside quadrangle `q` but outside its inscribed trapezoid.
    Bottom(usize),
    Outside,
}

impl Location {
    pub fn quad(self) -> Option<usize> {
        match self {
            Location::Inscribed(q) | Location::Bottom(q) => Some(q),
            Location::Outside => None,
        }
    }
}

/// The three trapezoids derived from one quadrangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrangleDecomposition {
    pub inscribed: TrapezoidTube,
    pub circumscribed: TrapezoidTube,
    pub bottom: Option<TrapezoidTube>,
    pub p_sl_inscribed: Point2,
    pub p_sr_inscribed: Point2,
}

#[derive(Debug, Clone, PartialEq)]
struct Quadrangle {
    // counter-clockwise: fr_q, fl_q, fl_{q-1}, fr_{q-1}
    vertices: [Point2; 4],
    n_l: Vec2,
    n_r: Vec2,
    decomposition: QuadrangleDecomposition,
}

/// A connected quadrangle virtual tube: quadrangles sharing bases end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrangleChain {
    bases: Vec<(Point2, Point2)>,
    axes: Vec<Vec2>,
    quads: Vec<Quadrangle>,
}

impl QuadrangleChain {
    /// Builds a chain from its ordered bases `(p_fr,q, p_fl,q)`, `q = 0..=N`.
    pub fn new(bases: Vec<(Point2, Point2)>) -> Result<Self, GeometryError> {
        if bases.len() < 2 {
            return Err(GeometryError::InvalidChain("need at least two bases".into()));
        }
        for (q, (fr, fl)) in bases.iter().enumerate() {
            if !(fr.x.is_finite() && fr.y.is_finite() && fl.x.is_finite() && fl.y.is_finite()) {
                return Err(GeometryError::InvalidChain(format!("base {q} has a non-finite vertex")));
            }
            if (fl - fr).norm() < MIN_EDGE {
                return Err(GeometryError::InvalidChain(format!("base {q} has zero length")));
            }
        }
        let axes: Vec<Vec2> = bases.iter().map(|&(fr, fl)| axis_of_base(fr, fl)).collect();
        let n = bases.len() - 1;

        let first_turn = angle_between(axes[0], axes[1]);
        if first_turn > PARALLEL_TOL_RAD {
            return Err(GeometryError::InvalidChain(format!(
                "quadrangle 1 must be a trapezoid (base angle {first_turn:.3e} rad)"
            )));
        }

        let mut quads = Vec::with_capacity(n);
        for q in 1..=n {
            let (fr, fl) = bases[q];
            let (fr0, fl0) = bases[q - 1];
            let vertices = [fr, fl, fl0, fr0];
            if !is_strictly_convex_ccw(&vertices) || polygon_area(&vertices) <= MIN_AREA {
                return Err(GeometryError::InvalidChain(format!(
                    "quadrangle {q} is not convex with positive area (check base order and left/right labels)"
                )));
            }
            let t = axes[q];
            let t_prev = axes[q - 1];
            if t.dot(&(fr0 - fr)) >= 0.0 || t.dot(&(fl0 - fl)) >= 0.0 {
                return Err(GeometryError::InvalidChain(format!(
                    "base {} is not behind base {q}",
                    q - 1
                )));
            }
            if t_prev.dot(&(fr - fr0)) <= 0.0 || t_prev.dot(&(fl - fl0)) <= 0.0 {
                return Err(GeometryError::InvalidChain(format!(
                    "quadrangle {q} folds back behind base {}",
                    q - 1
                )));
            }
            let centroid = vertices.iter().sum::<Point2>() / 4.0;
            let mut n_l = perp(fl0 - fl).normalize();
            if n_l.dot(&(centroid - fl)) < 0.0 {
                n_l = -n_l;
            }
            let mut n_r = perp(fr0 - fr).normalize();
            if n_r.dot(&(centroid - fr)) < 0.0 {
                n_r = -n_r;
            }
            let decomposition = decompose(q, &bases, &axes).map_err(|e| {
                GeometryError::InvalidChain(format!("quadrangle {q} cannot be decomposed: {e}"))
            })?;
            if let Some(bottom) = &decomposition.bottom {
                let scale = 1.0 + (fl - fr).norm() + (fl0 - fr0).norm();
                for v in bottom.vertices() {
                    let inside = (0..4).all(|i| {
                        let a = vertices[i];
                        let edge = vertices[(i + 1) % 4] - a;
                        cross(edge, v - a) / edge.norm() >= -1e-9 * scale
                    });
                    if !inside {
                        return Err(GeometryError::InvalidChain(format!(
                            "bottom trapezoid of quadrangle {q} leaves the quadrangle; lengthen it or soften the turn"
                        )));
                    }
                }
            }
            quads.push(Quadrangle {
                vertices,
                n_l,
                n_r,
                decomposition,
            });
        }

        for a in 0..n {
            for b in (a + 2)..n {
                if convex_overlap(&quads[a].vertices, &quads[b].vertices) {
                    return Err(GeometryError::InvalidChain(format!(
                        "quadrangles {} and {} intersect",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }

        Ok(Self { bases, axes, quads })
    }

    /// Chain made of a single trapezoid.
    pub fn from_trapezoid(tube: &TrapezoidTube) -> Result<Self, GeometryError> {
        Self::new(vec![(tube.p_sr(), tube.p_sl()), (tube.p_fr(), tube.p_fl())])
    }

    /// Number of quadrangles `N`.
    pub fn len(&self) -> usize {
        self.quads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quads.is_empty()
    }

    /// Base `q` as `(p_fr,q, p_fl,q)`, `q = 0..=N`.
    pub fn base(&self, q: usize) -> (Point2, Point2) {
        self.bases[q]
    }

    pub fn bases(&self) -> &[(Point2, Point2)] {
        &self.bases
    }

    /// Axis `t_c,q` orthogonal to base `q`, `q = 0..=N`.
    pub fn axis(&self, q: usize) -> Vec2 {
        self.axes[q]
    }

    fn quad(&self, q: usize) -> Result<&Quadrangle, GeometryError> {
        if q == 0 || q > self.quads.len() {
            return Err(GeometryError::InvalidIndex(q));
        }
        Ok(&self.quads[q - 1])
    }

    /// Vertices of quadrangle `q` (counter-clockwise, starting at `p_fr,q`).
    pub fn quad_vertices(&self, q: usize) -> Result<[Point2; 4], GeometryError> {
        Ok(self.quad(q)?.vertices)
    }

    /// Inward normals `(n_l,q, n_r,q)` of the legs of quadrangle `q`.
    pub fn leg_normals(&self, q: usize) -> Result<(Vec2, Vec2), GeometryError> {
        let quad = self.quad(q)?;
        Ok((quad.n_l, quad.n_r))
    }

    pub fn quad_contains(&self, q: usize, x: Point2) -> Result<bool, GeometryError> {
        Ok(convex_contains(&self.quad(q)?.vertices, x))
    }

    pub fn decompose_quadrangle(&self, q: usize) -> Result<&QuadrangleDecomposition, GeometryError> {
        Ok(&self.quad(q)?.decomposition)
    }

    /// Finishing line of the whole chain: a point on it and its axis.
    pub fn finishing_line(&self) -> (Point2, Vec2) {
        let n = self.quads.len();
        (self.bases[n].0, self.axes[n])
    }

    /// Region lookup; points on a shared base belong to the later quadrangle.
    pub fn locate(&self, p: Point2) -> Location {
        for q in (1..=self.quads.len()).rev() {
            let quad = &self.quads[q - 1];
            if convex_contains(&quad.vertices, p) {
                return if quad.decomposition.inscribed.contains(p) {
                    Location::Inscribed(q)
                } else {
                    Location::Bottom(q)
                };
            }
        }
        Location::Outside
    }

    /// Leg segments of every quadrangle as `(start, end)` pairs: left legs first, then right legs.
    pub fn wall_segments(&self) -> Vec<(Point2, Point2)> {
        let mut walls: Vec<(Point2, Point2)> = self.bases.windows(2).map(|w| (w[0].1, w[1].1)).collect();
        walls.extend(self.bases.windows(2).map(|w| (w[0].0, w[1].0)));
        walls
    }

    /// Euclidean distance from `p` to the nearest wall segment.
    pub fn wall_distance(&self, p: Point2) -> f64 {
        self.wall_segments()
            .into_iter()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Outline of the whole tube as a closed counter-clockwise polygon.
    pub fn outline(&self) -> Vec<Point2> {
        let mut pts: Vec<Point2> = self.bases.iter().map(|b| b.0).collect();
        pts.extend(self.bases.iter().rev().map(|b| b.1));
        pts
    }
}

/// Euclidean distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

fn decompose(
    q: usize,
    bases: &[(Point2, Point2)],
    axes: &[Vec2],
) -> Result<QuadrangleDecomposition, GeometryError> {
    let (fr, fl) = bases[q];
    let (fr0, fl0) = bases[q - 1];
    let t = axes[q];
    let t_prev = axes[q - 1];

    if q == 1 {
        let tube = TrapezoidTube::new(fr, fl, fl0, fr0)?;
        return Ok(QuadrangleDecomposition {
            inscribed: tube.clone(),
            circumscribed: tube,
            bottom: None,
            p_sl_inscribed: fl0,
            p_sr_inscribed: fr0,
        });
    }

    let left_dir = fl0 - fl;
    let right_dir = fr0 - fr;
    let level_l = t.dot(&fl0);
    let level_r = t.dot(&fr0);
    // intersection keeps the deeper start line, union the shallower one
    let deep = level_l.max(level_r);
    let shallow = level_l.min(level_r);
    let p_sl_in = if level_l >= level_r { fl0 } else { line_at_level(fl, left_dir, t, deep) };
    let p_sr_in = if level_r >= level_l { fr0 } else { line_at_level(fr, right_dir, t, deep) };
    let p_sl_c = if level_l <= level_r { fl0 } else { line_at_level(fl, left_dir, t, shallow) };
    let p_sr_c = if level_r <= level_l { fr0 } else { line_at_level(fr, right_dir, t, shallow) };

    let inscribed = TrapezoidTube::new(fr, fl, p_sl_in, p_sr_in)?;
    let circumscribed = TrapezoidTube::new(fr, fl, p_sl_c, p_sr_c)?;

    let bottom = if angle_between(t, t_prev) <= SAME_AXIS_TOL_RAD {
        None
    } else {
        let b_l = t_prev.dot(&p_sl_in);
        let b_r = t_prev.dot(&p_sr_in);
        let (near, far) = (b_l.min(b_r), b_l.max(b_r));
        Some(TrapezoidTube::new(
            line_at_level(fr, right_dir, t_prev, far),
            line_at_level(fl, left_dir, t_prev, far),
            line_at_level(fl, left_dir, t_prev, near),
            line_at_level(fr, right_dir, t_prev, near),
        )?)
    };

    Ok(QuadrangleDecomposition {
        inscribed,
        circumscribed,
        bottom,
        p_sl_inscribed: p_sl_in,
        p_sr_inscribed: p_sr_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn unit_square() -> TrapezoidTube {
        TrapezoidTube::new(p(1.0, 1.0), p(0.0, 1.0), p(0.0, 0.0), p(1.0, 0.0)).unwrap()
    }

    fn fig2() -> TrapezoidTube {
        TrapezoidTube::new(p(2.0, 1.0), p(-2.0, 1.0), p(-1.0, 0.0), p(1.0, 0.0)).unwrap()
    }

    #[test]
    fn unit_square_axes() {
        let t = unit_square();
        assert_abs_diff_eq!(t.t_c(), Vec2::new(0.0, 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(t.n_l(), Vec2::new(1.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(t.n_r(), Vec2::new(-1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn slanted_leg_normals() {
        let t = fig2();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(t.n_l(), Vec2::new(s, s), epsilon = 1e-15);
        assert_abs_diff_eq!(t.n_r(), Vec2::new(-s, s), epsilon = 1e-15);
        assert!(t.n_l().dot(&(t.p_sl() - t.p_fl())).abs() <= 1e-9);
        assert!(t.n_r().dot(&(t.p_sr() - t.p_fr())).abs() <= 1e-9);
        assert!(t.t_c().dot(&(t.p_sr() - t.p_sl())).abs() <= 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            TrapezoidTube::new(p(1.0, 1.0), p(1.0, 1.0), p(0.0, 0.0), p(1.0, 0.0)),
            Err(GeometryError::DegenerateTube("zero-length base"))
        );
        assert!(matches!(
            TrapezoidTube::new(p(1.0, 1.0), p(0.0, 1.2), p(0.0, 0.0), p(1.0, 0.0)),
            Err(GeometryError::NonParallelBases(_))
        ));
        // left and right swapped on the starting base only
        assert!(matches!(
            TrapezoidTube::new(p(1.0, 1.0), p(0.0, 1.0), p(1.0, 0.0), p(0.0, 0.0)),
            Err(GeometryError::DegenerateTube(_))
        ));
    }

    #[test]
    fn containment() {
        let t = unit_square();
        assert!(t.contains(p(0.5, 0.5)));
        assert!(t.contains(p(1.0, 1.0)));
        assert!(!t.contains(p(0.0, 0.5) - t.n_l() * 1e-6));
    }

    #[test]
    fn sections() {
        let s = unit_square().cross_section(p(0.3, 0.5)).unwrap();
        assert_abs_diff_eq!(s.p_l, p(0.0, 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(s.p_r, p(1.0, 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(s.r_t, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.m, p(0.5, 0.5), epsilon = 1e-15);

        let s = fig2().cross_section(p(0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(s.p_l, p(-1.5, 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(s.p_r, p(1.5, 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(s.r_t, 1.5, epsilon = 1e-15);

        let t = fig2();
        let s = t.cross_section(p(0.7, 1.0)).unwrap();
        assert_abs_diff_eq!(s.p_l, t.p_fl(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.p_r, t.p_fr(), epsilon = 1e-15);

        assert_eq!(t.cross_section(p(0.0, 1.5)), Err(GeometryError::OutOfSlab));
        assert_eq!(t.cross_section(p(0.0, -0.1)), Err(GeometryError::OutOfSlab));
    }

    #[test]
    fn widths() {
        assert_abs_diff_eq!(unit_square().width(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(fig2().width(), 1.0, epsilon = 1e-15);
        let long = TrapezoidTube::new(p(2.0, 4.0), p(0.0, 4.0), p(0.0, 0.0), p(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(long.width(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn boundary_distances() {
        let sq = unit_square();
        assert_abs_diff_eq!(sq.boundary_distance(p(0.5, 0.5)).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.boundary_distance(p(0.2, 0.5)).unwrap(), 0.2, epsilon = 1e-15);
        // point-to-line distance to x + y + 1 = 0
        let expected = (0.0_f64 + 0.5 + 1.0).abs() / 2f64.sqrt();
        assert_abs_diff_eq!(fig2().boundary_distance(p(0.0, 0.5)).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.06066, epsilon = 1e-5);
        assert_eq!(sq.boundary_distance(p(2.0, 0.5)), Err(GeometryError::OutsideTube));
    }

    #[test]
    fn revised_radius() {
        assert_abs_diff_eq!(unit_square().revised_safety_radius(0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            fig2().revised_safety_radius(0.5).unwrap(),
            0.5 * 2f64.sqrt(),
            epsilon = 1e-12
        );
        // right leg parallel to the axis, left leg at 60°
        let h = 1.0;
        let skew = TrapezoidTube::new(
            p(1.0, h),
            p(-h * 3f64.sqrt(), h),
            p(0.0, 0.0),
            p(1.0, 0.0),
        )
        .unwrap();
        assert_abs_diff_eq!(skew.revised_safety_radius(0.2).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_differences() {
        let t = fig2();
        let x = p(0.3, 0.4);
        let h = 1e-6;
        for dir in [Vec2::x(), Vec2::y()] {
            let fd_r = (t.section_at(x + dir * h).r_t - t.section_at(x - dir * h).r_t) / (2.0 * h);
            assert_abs_diff_eq!(t.half_width_gradient().dot(&dir), fd_r, epsilon = 1e-8);
            let fd_m = (t.section_at(x + dir * h).m - t.section_at(x - dir * h).m) / (2.0 * h);
            let jac_m = t.midpoint_rate() * t.t_c().dot(&dir);
            assert_abs_diff_eq!(jac_m, fd_m, epsilon = 1e-8);
        }
    }

    fn straight_chain() -> QuadrangleChain {
        QuadrangleChain::new(vec![
            (p(1.0, 0.0), p(-1.0, 0.0)),
            (p(1.0, 2.0), p(-1.0, 2.0)),
            (p(1.5, 4.0), p(-1.5, 4.0)),
        ])
        .unwrap()
    }

    /// Vertical corridor turning 45° right; the outer leg keeps the old heading.
    fn corner_chain() -> QuadrangleChain {
        QuadrangleChain::new(vec![
            (p(1.0, 0.0), p(-1.0, 0.0)),
            (p(1.0, 2.0), p(-1.0, 2.0)),
            (p(4.0, 5.0), p(-1.0, 10.0)),
        ])
        .unwrap()
    }

    #[test]
    fn straight_joint_has_no_bottom() {
        let chain = straight_chain();
        let d = chain.decompose_quadrangle(2).unwrap();
        assert!(d.bottom.is_none());
        for (a, b) in d.inscribed.vertices().iter().zip(d.circumscribed.vertices().iter()) {
            assert!((a - b).norm() <= 1e-9);
        }
        let d1 = chain.decompose_quadrangle(1).unwrap();
        assert_eq!(d1.inscribed, d1.circumscribed);
        assert!(d1.bottom.is_none());
    }

    #[test]
    fn corner_decomposition() {
        let chain = corner_chain();
        let d = chain.decompose_quadrangle(2).unwrap();
        let bottom = d.bottom.as_ref().expect("turn has a bottom trapezoid");
        assert_abs_diff_eq!(bottom.t_c(), chain.axis(1), epsilon = 1e-12);
        assert!(d.inscribed.area() < chain_area(&chain, 2) - 1e-6);
        assert!(d.circumscribed.area() > chain_area(&chain, 2) + 1e-6);
        assert_eq!(chain.decompose_quadrangle(3), Err(GeometryError::InvalidIndex(3)));
        assert_eq!(chain.decompose_quadrangle(0), Err(GeometryError::InvalidIndex(0)));
    }

    #[test]
    fn right_angle_turn_between_rectangles() {
        // vertical corridor x ∈ [-1, 1], horizontal corridor y ∈ [4, 6], both 2 wide
        let chain = QuadrangleChain::new(vec![
            (p(1.0, 0.0), p(-1.0, 0.0)),
            (p(1.0, 2.0), p(-1.0, 2.0)),
            (p(5.0, 4.0), p(5.0, 6.0)),
            (p(9.0, 4.0), p(9.0, 6.0)),
        ])
        .unwrap();
        let d = chain.decompose_quadrangle(2).unwrap();
        let bottom = d.bottom.as_ref().unwrap();
        let quad = chain.quad_vertices(2).unwrap();
        let (lo, hi) = quad.iter().fold((p(f64::MAX, f64::MAX), p(f64::MIN, f64::MIN)), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        });
        let mut strictly_smaller = false;
        let n = 120;
        for i in 0..=n {
            for j in 0..=n {
                let x = p(
                    lo.x + (hi.x - lo.x) * i as f64 / n as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / n as f64,
                );
                let in_quad = chain.quad_contains(2, x).unwrap();
                if d.inscribed.contains(x) || bottom.contains(x) {
                    assert!(in_quad, "{x:?}");
                }
                if in_quad {
                    assert!(d.circumscribed.contains(x));
                    assert!(d.inscribed.contains(x) || bottom.contains(x), "{x:?}");
                    strictly_smaller |= !d.inscribed.contains(x);
                }
            }
        }
        assert!(strictly_smaller);
    }

    fn chain_area(chain: &QuadrangleChain, q: usize) -> f64 {
        polygon_area(&chain.quad_vertices(q).unwrap())
    }

    #[test]
    fn locate_regions() {
        let chain = corner_chain();
        let d = chain.decompose_quadrangle(2).unwrap();
        let centre = d.inscribed.vertices().iter().sum::<Point2>() / 4.0;
        assert_eq!(chain.locate(centre), Location::Inscribed(2));
        assert_eq!(chain.locate(p(0.0, 2.5)), Location::Bottom(2));
        assert_eq!(chain.locate(p(0.0, 2.0)), Location::Bottom(2));
        assert_eq!(chain.locate(p(0.0, 3.5)), Location::Inscribed(2));
        assert_eq!(chain.locate(p(0.0, 1.0)), Location::Inscribed(1));
        assert_eq!(chain.locate(p(-3.0, 1.0)), Location::Outside);
        let straight = straight_chain();
        assert_eq!(straight.locate(p(0.2, 2.0)), Location::Inscribed(2));
    }

    #[test]
    fn chain_validation() {
        // first quadrangle not a trapezoid
        assert!(QuadrangleChain::new(vec![(p(1.0, 0.0), p(-1.0, 0.0)), (p(1.0, 2.0), p(-1.0, 2.5))]).is_err());
        // left/right labels swapped
        assert!(QuadrangleChain::new(vec![(p(-1.0, 0.0), p(1.0, 0.0)), (p(-1.0, 2.0), p(1.0, 2.0))]).is_err());
        // a chain that folds back over itself
        let folded = QuadrangleChain::new(vec![
            (p(1.0, 0.0), p(-1.0, 0.0)),
            (p(1.0, 4.0), p(-1.0, 4.0)),
            (p(4.0, 4.0), p(4.0, 6.0)),
            (p(6.0, 1.0), p(8.0, 1.0)),
            (p(0.5, -1.0), p(0.5, 1.0)),
        ]);
        assert!(folded.is_err());
    }

    #[test]
    fn wall_distance_matches_rectangle() {
        let chain = straight_chain();
        assert_abs_diff_eq!(chain.wall_distance(p(0.0, 1.0)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chain.wall_distance(p(0.8, 1.0)), 0.2, epsilon = 1e-12);
    }
}
