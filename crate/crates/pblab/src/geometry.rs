//! Convex target domains and marked boundaries.
//!
//! A [`ConvexDomain`] is a disc or a strictly convex CCW polygon together
//! with a declared area. A [`MarkedBoundary`] fixes N cyclically ordered
//! marked points on the boundary; the closed arcs between consecutive marks
//! are the sets admissible maps must send the input tuple into. Arc
//! membership is resolved through exact point-to-arc distances so that a
//! marked point belongs to both adjacent arcs.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Relative tolerance for construction-time geometric consistency checks.
pub const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

#[inline]
pub fn v(x: f64, y: f64) -> Vec2 {
    Vec2 { x, y }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn unit(self) -> Vec2 {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        self / n
    }

    /// Counterclockwise rotation by 90 degrees.
    #[inline]
    pub fn perp(self) -> Vec2 {
        v(-self.y, self.x)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn from_angle(t: f64) -> Vec2 {
        v(t.cos(), t.sin())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        v(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        v(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        v(self.x * k, self.y * k)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        v(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        v(-self.x, -self.y)
    }
}

/// Distance from `q` to the closed segment `[a, b]`.
pub fn segment_dist(q: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return q.dist(a);
    }
    let t = ((q - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    q.dist(a + ab * t)
}

/// Which convention fixes the scale of a freshly built disc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Area 1, the convention for marked-domain invariants.
    UnitArea,
    /// Radius 1, the convention for the circle-valued invariant.
    UnitRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Disc { center: Vec2, radius: f64 },
    Polygon { vertices: Vec<Vec2> },
}

/// A disc or strictly convex polygon with validated declared area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexDomain {
    shape: Shape,
    declared_area: f64,
}

impl ConvexDomain {
    pub fn disc(center: Vec2, radius: f64) -> Result<ConvexDomain> {
        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("disc radius {radius} must be positive")));
        }
        Ok(ConvexDomain {
            shape: Shape::Disc { center, radius },
            declared_area: std::f64::consts::PI * radius * radius,
        })
    }

    /// Disc at the origin under the requested normalization: radius
    /// `1/sqrt(pi)` for unit area, radius 1 for the unit ball.
    pub fn unit_disc(norm: Normalization) -> ConvexDomain {
        let radius = match norm {
            Normalization::UnitArea => 1.0 / std::f64::consts::PI.sqrt(),
            Normalization::UnitRadius => 1.0,
        };
        ConvexDomain::disc(Vec2::ZERO, radius).expect("positive radius")
    }

    /// Axis-aligned square `[0, side]^2`.
    pub fn square(side: f64) -> Result<ConvexDomain> {
        ConvexDomain::polygon(vec![
            v(0.0, 0.0),
            v(side, 0.0),
            v(side, side),
            v(0.0, side),
        ])
    }

    /// Right triangle with legs `leg` on the axes; `leg = sqrt(2)` has area 1.
    pub fn right_triangle(leg: f64) -> Result<ConvexDomain> {
        ConvexDomain::polygon(vec![v(0.0, 0.0), v(leg, 0.0), v(0.0, leg)])
    }

    /// Strictly convex polygon with CCW-listed vertices.
    pub fn polygon(vertices: Vec<Vec2>) -> Result<ConvexDomain> {
        if vertices.len() < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        let n = vertices.len();
        let scale_sq = vertices
            .iter()
            .zip(vertices.iter().cycle().skip(1))
            .map(|(a, b)| (*b - *a).norm_sq())
            .fold(0.0f64, f64::max);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            if turn <= GEOM_TOL * scale_sq {
                return Err(Error::Geometry(format!(
                    "vertices {i}..{} do not make a strictly convex CCW turn (cross = {turn:e})",
                    (i + 2) % n
                )));
            }
        }
        let area = shoelace(&vertices);
        Ok(ConvexDomain {
            shape: Shape::Polygon { vertices },
            declared_area: area,
        })
    }

    /// Rebuilds from a shape plus a declared area, enforcing that the shape's
    /// actual area matches the declaration to relative 1e-12.
    pub fn with_declared_area(shape: Shape, declared_area: f64) -> Result<ConvexDomain> {
        let built = match shape {
            Shape::Disc { center, radius } => ConvexDomain::disc(center, radius)?,
            Shape::Polygon { vertices } => ConvexDomain::polygon(vertices)?,
        };
        let actual = built.area();
        if (actual - declared_area).abs() > GEOM_TOL * declared_area.abs().max(1.0) {
            return Err(Error::Geometry(format!(
                "declared area {declared_area} disagrees with computed area {actual}"
            )));
        }
        Ok(built)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn area(&self) -> f64 {
        self.declared_area
    }

    pub fn perimeter(&self) -> f64 {
        match &self.shape {
            Shape::Disc { radius, .. } => 2.0 * std::f64::consts::PI * radius,
            Shape::Polygon { vertices } => vertices
                .iter()
                .zip(vertices.iter().cycle().skip(1))
                .map(|(a, b)| a.dist(*b))
                .sum(),
        }
    }

    /// An interior point every boundary point sees along a straight segment.
    pub fn inner_center(&self) -> Vec2 {
        match &self.shape {
            Shape::Disc { center, .. } => *center,
            Shape::Polygon { vertices } => {
                let n = vertices.len() as f64;
                vertices.iter().fold(Vec2::ZERO, |s, p| s + *p) / n
            }
        }
    }

    pub fn contains(&self, q: Vec2, tol: f64) -> bool {
        match &self.shape {
            Shape::Disc { center, radius } => q.dist(*center) <= radius + tol,
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let edge = b - a;
                    (q - a).cross(edge) <= tol * edge.norm()
                })
            }
        }
    }

    /// Distance from `q` to the boundary curve (zero only on the boundary).
    pub fn boundary_distance(&self, q: Vec2) -> f64 {
        match &self.shape {
            Shape::Disc { center, radius } => (q.dist(*center) - radius).abs(),
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_dist(q, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Distance from `q` to the closed filled domain (zero inside).
    pub fn distance(&self, q: Vec2) -> f64 {
        if self.contains(q, 0.0) {
            0.0
        } else {
            self.boundary_distance(q)
        }
    }

    /// Boundary point at arc length `t` from the parametrization origin,
    /// walking counterclockwise. `t` is taken modulo the perimeter.
    pub fn point_at(&self, t: f64) -> Vec2 {
        let per = self.perimeter();
        let t = t.rem_euclid(per);
        match &self.shape {
            Shape::Disc { center, radius } => *center + Vec2::from_angle(t / radius) * *radius,
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let len = a.dist(b);
                    if t <= acc + len || i == n - 1 {
                        let s = ((t - acc) / len).clamp(0.0, 1.0);
                        return a + (b - a) * s;
                    }
                    acc += len;
                }
                unreachable!()
            }
        }
    }

    /// Closest boundary point to `q`, as `(arc parameter, distance)`.
    pub fn project(&self, q: Vec2) -> (f64, f64) {
        match &self.shape {
            Shape::Disc { center, radius } => {
                let d = q - *center;
                let r = d.norm();
                if r == 0.0 {
                    return (0.0, *radius);
                }
                let theta = d.angle().rem_euclid(2.0 * std::f64::consts::PI);
                (theta * radius, (r - radius).abs())
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let mut best = (0.0, f64::INFINITY);
                let mut acc = 0.0;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let ab = b - a;
                    let len = ab.norm();
                    let s = ((q - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
                    let d = q.dist(a + ab * s);
                    if d < best.1 {
                        best = (acc + s * len, d);
                    }
                    acc += len;
                }
                best
            }
        }
    }

    /// Pushes `q` onto the boundary along the ray from [`Self::inner_center`].
    /// Undefined at the center itself.
    pub fn ray_to_boundary(&self, q: Vec2) -> Result<Vec2> {
        let c = self.inner_center();
        let d = q - c;
        if d.norm() < 1e-14 {
            return Err(Error::Geometry(
                "ray projection undefined at the inner center".into(),
            ));
        }
        match &self.shape {
            Shape::Disc { center, radius } => {
                let dir = (q - *center).unit();
                Ok(*center + dir * *radius)
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let dir = d.unit();
                let mut best = f64::INFINITY;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    // Solve c + t dir = a + s (b - a), 0 <= s <= 1, t > 0.
                    let e = b - a;
                    let denom = dir.cross(e);
                    if denom.abs() < 1e-16 {
                        continue;
                    }
                    let t = (a - c).cross(e) / denom;
                    let s = (a - c).cross(dir) / denom;
                    if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                        best = best.min(t);
                    }
                }
                if best.is_finite() {
                    Ok(c + dir * best)
                } else {
                    Err(Error::Geometry("boundary ray found no edge".into()))
                }
            }
        }
    }

    /// Smallest enclosing disc of the domain.
    pub fn enclosing_disc(&self) -> (Vec2, f64) {
        match &self.shape {
            Shape::Disc { center, radius } => (*center, *radius),
            Shape::Polygon { vertices } => min_enclosing_disc(vertices),
        }
    }
}

fn shoelace(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum::<f64>()
}

/// Smallest disc containing all points; brute force over support pairs and
/// triples, adequate for polygon vertex lists.
pub fn min_enclosing_disc(pts: &[Vec2]) -> (Vec2, f64) {
    assert!(!pts.is_empty());
    let covers = |c: Vec2, r: f64| pts.iter().all(|p| p.dist(c) <= r + 1e-12);
    let mut best = (pts[0], f64::INFINITY);
    let n = pts.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = (pts[i] + pts[j]) / 2.0;
            let r = pts[i].dist(c);
            if r < best.1 && covers(c, r) {
                best = (c, r);
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                if let Some(c) = circumcenter(pts[i], pts[j], pts[k]) {
                    let r = pts[i].dist(c);
                    if r < best.1 && covers(c, r) {
                        best = (c, r);
                    }
                }
            }
        }
    }
    best
}

fn circumcenter(a: Vec2, b: Vec2, c: Vec2) -> Option<Vec2> {
    let d = 2.0 * ((b - a).cross(c - a));
    if d.abs() < 1e-18 {
        return None;
    }
    let asq = a.norm_sq();
    let bsq = b.norm_sq();
    let csq = c.norm_sq();
    let ux = (asq * (b.y - c.y) + bsq * (c.y - a.y) + csq * (a.y - b.y)) / d;
    let uy = (asq * (c.x - b.x) + bsq * (a.x - c.x) + csq * (b.x - a.x)) / d;
    Some(v(ux, uy))
}

/// One closed boundary arc between consecutive marked points.
#[derive(Debug, Clone)]
enum Arc {
    /// Angular window on a circle; `theta1 > theta0`, possibly beyond 2 pi.
    Circular {
        center: Vec2,
        radius: f64,
        theta0: f64,
        theta1: f64,
    },
    /// Chain of straight segments along a polygon boundary.
    Chain(Vec<Vec2>),
}

impl Arc {
    fn dist(&self, q: Vec2) -> f64 {
        match self {
            Arc::Circular {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let d = q - *center;
                let r = d.norm();
                if r == 0.0 {
                    return *radius;
                }
                let span = theta1 - theta0;
                let rel = (d.angle() - theta0).rem_euclid(2.0 * std::f64::consts::PI);
                if rel <= span {
                    (r - radius).abs()
                } else {
                    let p0 = *center + Vec2::from_angle(*theta0) * *radius;
                    let p1 = *center + Vec2::from_angle(*theta1) * *radius;
                    q.dist(p0).min(q.dist(p1))
                }
            }
            Arc::Chain(pts) => pts
                .windows(2)
                .map(|wnd| segment_dist(q, wnd[0], wnd[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Nearest point of the closed arc.
    fn project(&self, q: Vec2) -> Vec2 {
        match self {
            Arc::Circular {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let p0 = *center + Vec2::from_angle(*theta0) * *radius;
                let d = q - *center;
                let r = d.norm();
                if r == 0.0 {
                    return p0;
                }
                let span = theta1 - theta0;
                let rel = (d.angle() - theta0).rem_euclid(2.0 * std::f64::consts::PI);
                if rel <= span {
                    *center + d * (*radius / r)
                } else {
                    let p1 = *center + Vec2::from_angle(*theta1) * *radius;
                    if q.dist(p0) <= q.dist(p1) {
                        p0
                    } else {
                        p1
                    }
                }
            }
            Arc::Chain(pts) => {
                let mut best = pts[0];
                let mut best_d = f64::INFINITY;
                for wnd in pts.windows(2) {
                    let ab = wnd[1] - wnd[0];
                    let s = ((q - wnd[0]).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
                    let p = wnd[0] + ab * s;
                    let d = q.dist(p);
                    if d < best_d {
                        best_d = d;
                        best = p;
                    }
                }
                best
            }
        }
    }
}

/// A domain with N cyclically ordered marked boundary points.
#[derive(Debug, Clone)]
pub struct MarkedBoundary {
    domain: ConvexDomain,
    /// Arc-length parameters of the marks, strictly increasing, first in [0, L).
    params: Vec<f64>,
    points: Vec<Vec2>,
    arcs: Vec<Arc>,
}

impl MarkedBoundary {
    /// Marks given as boundary points. Each must lie on the boundary within
    /// relative 1e-12 of the domain scale and the cyclic order must be CCW.
    pub fn from_points(domain: ConvexDomain, marks: &[Vec2]) -> Result<MarkedBoundary> {
        let scale = domain.perimeter();
        let mut params = Vec::with_capacity(marks.len());
        for (i, q) in marks.iter().enumerate() {
            let (t, d) = domain.project(*q);
            if d > GEOM_TOL * scale {
                return Err(Error::Geometry(format!(
                    "marked point {i} at ({}, {}) is {d:e} away from the boundary",
                    q.x, q.y
                )));
            }
            params.push(t);
        }
        MarkedBoundary::from_params(domain, params)
    }

    /// Marks given as arc-length fractions in [0, 1) of the perimeter.
    pub fn from_fractions(domain: ConvexDomain, fractions: &[f64]) -> Result<MarkedBoundary> {
        let per = domain.perimeter();
        let params = fractions.iter().map(|f| f * per).collect();
        MarkedBoundary::from_params(domain, params)
    }

    fn from_params(domain: ConvexDomain, raw: Vec<f64>) -> Result<MarkedBoundary> {
        let n = raw.len();
        if n < 2 {
            return Err(Error::Geometry("need at least two marked points".into()));
        }
        let per = domain.perimeter();
        let params: Vec<f64> = raw.iter().map(|t| t.rem_euclid(per)).collect();
        // Starting from the smallest parameter, the cyclic walk must be a
        // strict increase: that is exactly CCW order without duplicates.
        let start = params
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        for k in 1..n {
            let prev = params[(start + k - 1) % n];
            let here = params[(start + k) % n];
            if here <= prev + GEOM_TOL * per {
                return Err(Error::Geometry(format!(
                    "marked points {} and {} are not in strict CCW order",
                    (start + k - 1) % n,
                    (start + k) % n
                )));
            }
        }
        let points: Vec<Vec2> = params.iter().map(|t| domain.point_at(*t)).collect();
        let arcs = (0..n)
            .map(|k| {
                let t0 = params[k];
                let mut t1 = params[(k + 1) % n];
                if t1 <= t0 {
                    t1 += per;
                }
                build_arc(&domain, t0, t1)
            })
            .collect();
        Ok(MarkedBoundary {
            domain,
            params,
            points,
            arcs,
        })
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec2 {
        self.points[i]
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Arc-length fractions of the marks along the boundary.
    pub fn fractions(&self) -> Vec<f64> {
        let per = self.domain.perimeter();
        self.params.iter().map(|t| t.rem_euclid(per) / per).collect()
    }

    /// Exact distance from `q` to the closed arc `k` (from mark k to mark k+1).
    pub fn arc_dist(&self, k: usize, q: Vec2) -> f64 {
        self.arcs[k].dist(q)
    }

    /// Nearest point of the closed arc `k` to `q`.
    pub fn arc_project(&self, k: usize, q: Vec2) -> Vec2 {
        self.arcs[k].project(q)
    }

    /// Indices of every arc within `tol` of `q`. `q` itself must be within
    /// `tol` of the boundary, otherwise an interior/exterior error is raised.
    /// A marked point reports both adjacent arcs.
    pub fn arc_index(&self, q: Vec2, tol: f64) -> Result<Vec<usize>> {
        let d = self.domain.boundary_distance(q);
        if d > tol {
            return Err(Error::Geometry(format!(
                "point ({}, {}) is {d:e} from the boundary, beyond tolerance {tol:e}",
                q.x, q.y
            )));
        }
        let hits: Vec<usize> = (0..self.arcs.len())
            .filter(|k| self.arc_dist(*k, q) <= tol)
            .collect();
        debug_assert!(!hits.is_empty(), "boundary point must hit some arc");
        Ok(hits)
    }
}

fn build_arc(domain: &ConvexDomain, t0: f64, t1: f64) -> Arc {
    match domain.shape() {
        Shape::Disc { center, radius } => Arc::Circular {
            center: *center,
            radius: *radius,
            theta0: t0 / radius,
            theta1: t1 / radius,
        },
        Shape::Polygon { vertices } => {
            let n = vertices.len();
            let mut cum = vec![0.0];
            for i in 0..n {
                let len = vertices[i].dist(vertices[(i + 1) % n]);
                cum.push(cum[i] + len);
            }
            let per = cum[n];
            let mut pts = vec![domain.point_at(t0)];
            // Interior vertices of the chain, walking CCW from t0 to t1.
            let mut t = t0;
            loop {
                let pos = t.rem_euclid(per);
                let wraps = t - pos;
                // Next vertex parameter strictly beyond pos.
                let next = cum
                    .iter()
                    .find(|c| **c > pos + GEOM_TOL * per)
                    .copied()
                    .unwrap_or(per)
                    + wraps;
                if next >= t1 - GEOM_TOL * per {
                    break;
                }
                pts.push(domain.point_at(next));
                t = next;
            }
            pts.push(domain.point_at(t1));
            Arc::Chain(pts)
        }
    }
}
