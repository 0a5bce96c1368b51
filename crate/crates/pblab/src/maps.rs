//! Planar maps with certified Jacobian determinant bounds.
//!
//! Postcomposing an admissible map by a planar map multiplies its bracket by
//! the Jacobian determinant of that map at the image point, so every map here
//! carries a declared supremum bound for |det D|. The workhorses are radial
//! profile maps (determinant `rho(u) rho'(u) / u` regardless of how the
//! radial scale varies with direction, because the polar differential is
//! triangular) and oblique slide folds (determinant equal to the transverse
//! profile slope). [`certify_jacobian`] re-measures any map's determinant by
//! finite differences with Richardson extrapolation.

use crate::error::Error;
use crate::geometry::{v, ConvexDomain, Shape, Vec2};
use crate::profile::Profile;
use crate::Result;
use serde::Serialize;

/// Direction-dependent radial scale `R(theta)` for radial profile maps.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialScale {
    /// Fixed radius: the map retracts onto a disc.
    Constant { radius: f64 },
    /// `R` is the ray-line crossing distance. `normal` is the unit normal of
    /// the line pointing away from the retraction target, `dp` the distance
    /// from the center to the line. With `center_inside` the center lies on
    /// the target side (normalized radius `1 + h/dp` for signed height `h`);
    /// otherwise it lies beyond the line (`1 - h/dp`) and the map is only
    /// defined where the normalized radius stays positive.
    LineCrossing {
        line_point: Vec2,
        normal: Vec2,
        dp: f64,
        center_inside: bool,
    },
    /// Boundary of `domain` thickened by `margin`: radii found by bisection
    /// along each ray.
    RoundedPolygon { domain: ConvexDomain, margin: f64 },
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapKind {
    Identity,
    /// `q -> a q + b`; bound is `|det a|`.
    Affine { a: [[f64; 2]; 2], b: Vec2 },
    /// `q -> center + (q - center) * rho(u) / u` with `u` the normalized
    /// radius along the ray through `q`.
    RadialProfile {
        center: Vec2,
        scale: RadialScale,
        profile: Profile,
    },
    /// Fold toward the line through `origin` with outward unit `normal`,
    /// moving points along `slide`; the transverse depth is re-profiled.
    SlideFold {
        origin: Vec2,
        normal: Vec2,
        slide: Vec2,
        profile: Profile,
    },
    /// Oblique coordinates of `q - vertex` in the frame `(e_a, e_b)` are
    /// clamped to their non-positive parts: the positive wedge lands exactly
    /// on `vertex`, the two single-sided sectors fold onto the rays.
    CornerPin { vertex: Vec2, e_a: Vec2, e_b: Vec2 },
    /// `r e^{i theta} -> r e^{i k theta}`: radius kept, angle multiplied.
    AnglePower { k: u32 },
    /// Stages applied first to last.
    Sequence { stages: Vec<PlanarMap> },
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanarMap {
    kind: MapKind,
    declared: f64,
}

impl PlanarMap {
    pub fn identity() -> PlanarMap {
        PlanarMap {
            kind: MapKind::Identity,
            declared: 1.0,
        }
    }

    /// Affine map with determinant within 1e-10 of one.
    pub fn affine_unimodular(a: [[f64; 2]; 2], b: Vec2) -> Result<PlanarMap> {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if (det - 1.0).abs() > 1e-10 {
            return Err(Error::Map(format!(
                "matrix determinant {det} is not 1 within 1e-10"
            )));
        }
        Ok(PlanarMap {
            kind: MapKind::Affine { a, b },
            declared: 1.0,
        })
    }

    /// Scaling by `length_factor` about `center`; bound `length_factor^2`.
    pub fn homothety(center: Vec2, length_factor: f64) -> Result<PlanarMap> {
        if !(length_factor > 0.0) {
            return Err(Error::Map(format!(
                "homothety factor {length_factor} must be positive"
            )));
        }
        let a = [[length_factor, 0.0], [0.0, length_factor]];
        let b = center - center * length_factor;
        Ok(PlanarMap {
            kind: MapKind::Affine { a, b },
            declared: length_factor * length_factor,
        })
    }

    pub fn translation(b: Vec2) -> PlanarMap {
        PlanarMap {
            kind: MapKind::Affine {
                a: [[1.0, 0.0], [0.0, 1.0]],
                b,
            },
            declared: 1.0,
        }
    }

    pub fn radial(center: Vec2, scale: RadialScale, profile: Profile) -> PlanarMap {
        let declared = profile.radial_jacobian_sup();
        PlanarMap {
            kind: MapKind::RadialProfile {
                center,
                scale,
                profile,
            },
            declared,
        }
    }

    pub fn slide_fold(origin: Vec2, normal: Vec2, slide: Vec2, profile: Profile) -> Result<PlanarMap> {
        if (normal.norm() - 1.0).abs() > 1e-12 || (slide.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Map("fold axes must be unit vectors".into()));
        }
        if slide.dot(normal).abs() < 1e-9 {
            return Err(Error::Map(
                "slide direction may not be parallel to the fold line".into(),
            ));
        }
        let declared = profile.max_slope();
        Ok(PlanarMap {
            kind: MapKind::SlideFold {
                origin,
                normal,
                slide,
                profile,
            },
            declared,
        })
    }

    /// Collapses the positive wedge spanned by `e_a`, `e_b` at `vertex` onto
    /// the vertex. Continuous and piecewise linear: each piece is a product
    /// of rank-one projections in the oblique frame, so |det D| is 0 or 1
    /// everywhere it exists and the declared bound is 1. The folds are exact
    /// (no smoothing window), so points already outside the closed wedge and
    /// its two shadow sectors are untouched bit for bit.
    pub fn corner_pin(vertex: Vec2, e_a: Vec2, e_b: Vec2) -> Result<PlanarMap> {
        if (e_a.norm() - 1.0).abs() > 1e-12 || (e_b.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Map("pin directions must be unit vectors".into()));
        }
        if e_a.cross(e_b).abs() < 1e-9 {
            return Err(Error::Map("pin directions may not be parallel".into()));
        }
        Ok(PlanarMap {
            kind: MapKind::CornerPin { vertex, e_a, e_b },
            declared: 1.0,
        })
    }

    pub fn angle_power(k: u32) -> Result<PlanarMap> {
        if k == 0 {
            return Err(Error::Map("angle power needs k >= 1".into()));
        }
        Ok(PlanarMap {
            kind: MapKind::AnglePower { k },
            declared: k as f64,
        })
    }

    /// Stages applied in order; bound is the product of stage bounds.
    pub fn sequence(stages: Vec<PlanarMap>) -> PlanarMap {
        let declared = stages.iter().map(|s| s.declared).product();
        PlanarMap {
            kind: MapKind::Sequence { stages },
            declared,
        }
    }

    /// Replaces the declared bound by a larger one (never tightens).
    pub fn with_declared_bound(mut self, bound: f64) -> PlanarMap {
        assert!(
            bound >= self.declared - 1e-12,
            "cannot declare a bound below the certified one"
        );
        self.declared = bound;
        self
    }

    pub fn declared_jacobian_bound(&self) -> f64 {
        self.declared
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    /// Structural description for artifacts.
    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "declared_jacobian_bound": self.declared,
            "map": serde_json::to_value(&self.kind).unwrap_or(serde_json::Value::Null),
        })
    }

    pub fn apply(&self, q: Vec2) -> Result<Vec2> {
        match &self.kind {
            MapKind::Identity => Ok(q),
            MapKind::Affine { a, b } => Ok(v(
                a[0][0] * q.x + a[0][1] * q.y + b.x,
                a[1][0] * q.x + a[1][1] * q.y + b.y,
            )),
            MapKind::RadialProfile {
                center,
                scale,
                profile,
            } => apply_radial(*center, scale, profile, q),
            MapKind::SlideFold {
                origin,
                normal,
                slide,
                profile,
            } => {
                let depth = -(q - *origin).dot(*normal);
                if depth >= profile.x1() {
                    return Ok(q);
                }
                let new_depth = profile.eval(depth);
                // Move along the slide direction until the depth matches.
                let step = (depth - new_depth) / slide.dot(*normal);
                Ok(q + *slide * step)
            }
            MapKind::CornerPin { vertex, e_a, e_b } => {
                let d = q - *vertex;
                let denom = e_a.cross(*e_b);
                let a = d.cross(*e_b) / denom;
                let b = e_a.cross(d) / denom;
                if a >= 0.0 && b >= 0.0 {
                    return Ok(*vertex);
                }
                if a < 0.0 && b < 0.0 {
                    return Ok(q);
                }
                Ok(*vertex + *e_a * a.min(0.0) + *e_b * b.min(0.0))
            }
            MapKind::AnglePower { k } => {
                let r = q.norm();
                if r == 0.0 {
                    return Ok(q);
                }
                Ok(Vec2::from_angle(q.angle() * *k as f64) * r)
            }
            MapKind::Sequence { stages } => {
                let mut p = q;
                for s in stages {
                    p = s.apply(p)?;
                }
                Ok(p)
            }
        }
    }
}

fn apply_radial(center: Vec2, scale: &RadialScale, profile: &Profile, q: Vec2) -> Result<Vec2> {
    let u = match scale {
        RadialScale::Constant { radius } => q.dist(center) / radius,
        RadialScale::LineCrossing {
            line_point,
            normal,
            dp,
            center_inside,
        } => {
            let h = (q - *line_point).dot(*normal);
            if *center_inside {
                1.0 + h / dp
            } else {
                1.0 - h / dp
            }
        }
        RadialScale::RoundedPolygon { domain, margin } => {
            let r = q.dist(center);
            if r == 0.0 {
                0.0
            } else {
                r / rounded_radius(domain, *margin, center, (q - center) / r)
            }
        }
    };
    // Identity branches avoid dividing by a small normalized radius; the
    // outside-center fold instead rejects rays that never reach its line.
    if profile.identity_below() && u <= profile.x0() {
        return Ok(q);
    }
    if profile.identity_above() && u >= profile.x1() {
        return Ok(q);
    }
    if u <= 1e-12 {
        return Err(Error::MapDomain { x: q.x, y: q.y });
    }
    Ok(center + (q - center) * (profile.eval(u) / u))
}

/// Radius of `domain + B_margin` along `dir` from `center`, by bisection on
/// the distance function; `dir` must be unit and `center` interior.
fn rounded_radius(domain: &ConvexDomain, margin: f64, center: Vec2, dir: Vec2) -> f64 {
    let (_, enc_r) = domain.enclosing_disc();
    let mut lo = 0.0f64;
    let mut hi = 2.0 * enc_r + margin + center.dist(domain.inner_center());
    debug_assert!(domain.distance(center + dir * hi) > margin);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if domain.distance(center + dir * mid) <= margin {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// How one polygon edge is folded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldCase {
    /// Adjacent edge lines are parallel: oblique slide fold.
    Slide,
    /// Adjacent edge lines meet on the target side: radial fold from inside.
    RadialInside,
    /// Adjacent edge lines meet beyond the edge: radial fold from outside,
    /// defined only on a half-plane.
    RadialOutside,
}

/// A map collapsing the plane onto a convex domain, with its measured
/// containment quality.
#[derive(Debug, Clone)]
pub struct PseudoRetract {
    pub map: PlanarMap,
    /// Certified product of per-stage determinant bounds.
    pub declared: f64,
    pub domain: ConvexDomain,
    pub cases: Vec<FoldCase>,
    /// Largest sampled distance from an image point to the domain.
    pub containment_defect: f64,
    /// Largest sampled distance from the image of an exterior point to the
    /// boundary.
    pub collapse_defect: f64,
}

/// Pseudoretract onto `domain` with determinant bound at most `1 + eps`,
/// verified by dense sampling at relative tolerance 1e-9.
pub fn pseudoretract(domain: &ConvexDomain, eps: f64) -> Result<PseudoRetract> {
    pseudoretract_with_tol(domain, eps, 1e-9)
}

pub fn pseudoretract_with_tol(domain: &ConvexDomain, eps: f64, tol: f64) -> Result<PseudoRetract> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Map(format!("retract slack {eps} must be in (0, 1)")));
    }
    let built = match domain.shape() {
        Shape::Disc { center, radius } => disc_retract(*center, *radius, eps)?,
        Shape::Polygon { vertices } => polygon_retract(domain, vertices.clone(), eps)?,
    };
    let (map, declared, cases) = built;
    let (containment_defect, collapse_defect) = sample_retract_defects(&map, domain)?;
    let scale = domain.enclosing_disc().1;
    if containment_defect > tol * scale {
        return Err(Error::Map(format!(
            "retract image leaves the domain by {containment_defect:e} (tolerance {:e})",
            tol * scale
        )));
    }
    if collapse_defect > tol * scale {
        return Err(Error::Map(format!(
            "exterior points miss the boundary by {collapse_defect:e} (tolerance {:e})",
            tol * scale
        )));
    }
    Ok(PseudoRetract {
        map,
        declared,
        domain: domain.clone(),
        cases,
        containment_defect,
        collapse_defect,
    })
}

fn disc_retract(center: Vec2, radius: f64, eps: f64) -> Result<(PlanarMap, f64, Vec<FoldCase>)> {
    let profile = budgeted_plateau_profile(1.0 + eps)?;
    let map = PlanarMap::radial(center, RadialScale::Constant { radius }, profile);
    let declared = map.declared_jacobian_bound();
    Ok((map, declared, Vec::new()))
}

/// Identity-to-plateau profile `[1 - w, 1] -> flat 1` whose certified radial
/// determinant stays within `budget`.
fn budgeted_plateau_profile(budget: f64) -> Result<Profile> {
    let g = budget - 1.0;
    let mut window = (g / 3.0).min(0.2);
    let cap = 1.0 + 0.6 * g;
    for _ in 0..10 {
        let p = Profile::identity_then_flat(1.0 - window, 1.0, 1.0, cap)?;
        if p.radial_jacobian_sup() <= budget {
            return Ok(p);
        }
        window *= 0.5;
    }
    Err(Error::Map(format!(
        "no plateau profile fits determinant budget {budget}"
    )))
}

/// Per-edge fold data for a convex polygon.
struct EdgeFold {
    case: FoldCase,
    /// Start vertex of the edge.
    origin: Vec2,
    /// Outward unit normal of the edge line.
    normal: Vec2,
    /// Fold center for the radial cases.
    center: Vec2,
    /// Distance from the center to the edge line.
    dp: f64,
    /// Slide direction for the parallel case.
    slide: Vec2,
    /// Largest admissible identity-zone depth.
    depth_clearance: f64,
}

fn polygon_retract(
    domain: &ConvexDomain,
    vertices: Vec<Vec2>,
    eps: f64,
) -> Result<(PlanarMap, f64, Vec<FoldCase>)> {
    let n = vertices.len();
    let scale = domain.enclosing_disc().1;
    let mut folds = Vec::with_capacity(n);
    for j in 0..n {
        let a = vertices[j];
        let b = vertices[(j + 1) % n];
        let e = (b - a).unit();
        // CCW polygon: interior lies left of the edge, outward is -perp.
        let normal = -e.perp();
        let prev_a = vertices[(j + n - 1) % n];
        let next_b = vertices[(j + 2) % n];
        let d_prev = (a - prev_a).unit();
        let d_next = (next_b - b).unit();
        // Identity zone must keep every vertex off this edge line fixed.
        let mut clearance = f64::INFINITY;
        for w in &vertices {
            let depth = -(*w - a).dot(normal);
            if depth > 1e-9 * scale {
                clearance = clearance.min(depth);
            }
        }
        let depth_clearance = 0.5 * clearance;
        if d_prev.cross(d_next).abs() <= 1e-10 {
            folds.push(EdgeFold {
                case: FoldCase::Slide,
                origin: a,
                normal,
                center: Vec2::ZERO,
                dp: 0.0,
                slide: d_next,
                depth_clearance,
            });
            continue;
        }
        // Intersection of the two adjacent edge lines.
        let p = line_intersection(prev_a, d_prev, b, d_next).ok_or_else(|| {
            Error::Map(format!("adjacent edge lines of edge {j} do not meet"))
        })?;
        let h = (p - a).dot(normal);
        if h.abs() <= 1e-10 * scale {
            return Err(Error::Map(format!(
                "adjacent edge lines of edge {j} meet on the edge line itself"
            )));
        }
        folds.push(EdgeFold {
            case: if h < 0.0 {
                FoldCase::RadialInside
            } else {
                FoldCase::RadialOutside
            },
            origin: a,
            normal,
            center: p,
            dp: h.abs(),
            slide: Vec2::ZERO,
            depth_clearance,
        });
    }

    // Outside-center folds only cover a half-plane, so they need a bounded
    // catchment stage first: a radial retract onto the polygon thickened by
    // half the smallest center-line distance. Without such folds the fold
    // stages are global and adding a catchment would spoil the exact
    // collapse of vertex sectors, so it is skipped.
    let case3_min = folds
        .iter()
        .filter(|f| f.case == FoldCase::RadialOutside)
        .map(|f| f.dp)
        .fold(f64::INFINITY, f64::min);
    let n_stages = if case3_min.is_finite() { n + 1 } else { n };
    let stage_budget = (1.0 + eps).powf(1.0 / n_stages as f64);
    let mut stages = Vec::with_capacity(n_stages);
    if case3_min.is_finite() {
        let margin = (0.5 * case3_min).min(0.5 * scale);
        stages.push(catchment_stage(domain, margin, stage_budget)?);
    }
    for f in &folds {
        stages.push(fold_stage(f, stage_budget)?);
    }
    let map = PlanarMap::sequence(stages);
    let declared = map.declared_jacobian_bound();
    let cases = folds.iter().map(|f| f.case).collect();
    Ok((map, declared, cases))
}

/// First stage: radial retract onto the rounded polygon `domain + B_margin`,
/// exactly the identity on `domain + B_{margin/2}`.
fn catchment_stage(domain: &ConvexDomain, margin: f64, budget: f64) -> Result<PlanarMap> {
    let center = domain.inner_center();
    // Largest normalized radius of the half-margin offset inside the full
    // one, from dense directional sampling; radii vary smoothly, so sampling
    // with a generous safety factor fixes the identity zone.
    let mut max_ratio = 0.0f64;
    for k in 0..4096 {
        let dir = Vec2::from_angle(std::f64::consts::TAU * k as f64 / 4096.0);
        let inner = rounded_radius(domain, margin * 0.5, center, dir);
        let outer = rounded_radius(domain, margin, center, dir);
        max_ratio = max_ratio.max(inner / outer);
    }
    let identity_until = 1.0 - 0.5 * (1.0 - max_ratio);
    let g = budget - 1.0;
    let mut cap = 1.0 + 0.6 * g;
    for _ in 0..10 {
        let p = Profile::identity_then_flat(identity_until, 1.0, 1.0, cap)?;
        if p.radial_jacobian_sup() <= budget {
            return Ok(PlanarMap::radial(
                center,
                RadialScale::RoundedPolygon {
                    domain: domain.clone(),
                    margin,
                },
                p,
            ));
        }
        cap = 1.0 + 0.5 * (cap - 1.0);
    }
    Err(Error::Map(format!(
        "no catchment profile fits determinant budget {budget}"
    )))
}

fn fold_stage(fold: &EdgeFold, budget: f64) -> Result<PlanarMap> {
    let g = budget - 1.0;
    match fold.case {
        FoldCase::Slide => {
            // The slide determinant equals the profile slope, which the
            // builder keeps under the cap, so the widest admissible window
            // gives the gentlest fold.
            let p = Profile::flat_then_identity(fold.depth_clearance, budget)?;
            PlanarMap::slide_fold(fold.origin, fold.normal, fold.slide, p)
        }
        FoldCase::RadialInside => {
            // Normalized radius is 1 + h/dp; identity zone u <= 1 - omega
            // must contain every protected vertex: omega <= clearance / dp.
            let mut omega = (g / 3.0).min(fold.depth_clearance / fold.dp).min(0.3);
            let cap = 1.0 + 0.6 * g;
            for _ in 0..10 {
                let p = Profile::identity_then_flat(1.0 - omega, 1.0, 1.0, cap)?;
                if p.radial_jacobian_sup() <= budget {
                    return Ok(PlanarMap::radial(
                        fold.center,
                        RadialScale::LineCrossing {
                            line_point: fold.origin,
                            normal: fold.normal,
                            dp: fold.dp,
                            center_inside: true,
                        },
                        p,
                    ));
                }
                omega *= 0.5;
            }
            Err(Error::Map("no inside fold profile fits the budget".into()))
        }
        FoldCase::RadialOutside => {
            let mut omega = (g / 3.0).min(fold.depth_clearance / fold.dp).min(0.3);
            let cap = 1.0 + 0.6 * g;
            for _ in 0..10 {
                let p = Profile::flat_then_shifted_identity(1.0, 1.0 + omega, 1.0, cap)?;
                if p.radial_jacobian_sup() <= budget {
                    return Ok(PlanarMap::radial(
                        fold.center,
                        RadialScale::LineCrossing {
                            line_point: fold.origin,
                            normal: fold.normal,
                            dp: fold.dp,
                            center_inside: false,
                        },
                        p,
                    ));
                }
                omega *= 0.5;
            }
            Err(Error::Map("no outside fold profile fits the budget".into()))
        }
    }
}

fn line_intersection(a: Vec2, da: Vec2, b: Vec2, db: Vec2) -> Option<Vec2> {
    let denom = da.cross(db);
    if denom.abs() < 1e-14 {
        return None;
    }
    let t = (b - a).cross(db) / denom;
    Some(a + da * t)
}

fn sample_retract_defects(map: &PlanarMap, domain: &ConvexDomain) -> Result<(f64, f64)> {
    let (c, r) = domain.enclosing_disc();
    let reach = 1.8 * r;
    let lo = c - v(reach, reach);
    let n = 121;
    let step = 2.0 * reach / (n - 1) as f64;
    let mut containment = 0.0f64;
    let mut collapse = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let q = lo + v(i as f64 * step, j as f64 * step);
            let img = match map.apply(q) {
                Ok(p) => p,
                // Outside-center folds reject points beyond their half-plane;
                // those lie far outside the catchment and are not part of the
                // advertised domain.
                Err(Error::MapDomain { .. }) => continue,
                Err(e) => return Err(e),
            };
            containment = containment.max(domain.distance(img));
            if domain.distance(q) > 1e-6 * r {
                collapse = collapse.max(domain.boundary_distance(img));
            }
        }
    }
    // Ring of near-boundary exterior points.
    for k in 0..1024 {
        let t = domain.perimeter() * k as f64 / 1024.0;
        let p = domain.point_at(t);
        let dir = p - domain.inner_center();
        let q = p + dir.unit() * (1e-3 * r);
        if let Ok(img) = map.apply(q) {
            containment = containment.max(domain.distance(img));
            collapse = collapse.max(domain.boundary_distance(img));
        }
    }
    Ok((containment, collapse))
}

/// Angle k-fold cover of the disc: radius kept, angle multiplied by `k`.
/// The declared bound `k (1 + eps) / (1 - eps)` leaves slack over the
/// pointwise determinant `k`.
pub fn power_map(k: u32, eps: f64) -> Result<PlanarMap> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Map(format!("power slack {eps} must be in (0, 1)")));
    }
    let declared = k as f64 * (1.0 + eps) / (1.0 - eps);
    Ok(PlanarMap::angle_power(k)?.with_declared_bound(declared))
}

/// Collar re-imposition for unit-disc targets: squeezes `B_1` onto
/// `B_{1-eps}`, flattening the collar `[1 - eps, 1]` onto the inner circle,
/// then rescales back so the restriction to the unit circle is exactly the
/// identity. Everything within `eps` of the circle lands exactly on it.
pub fn retract_rescale(eps: f64, slack: f64) -> Result<PlanarMap> {
    if !(eps > 0.0 && eps < 0.5) || !(slack > 0.0 && slack < 1.0) {
        return Err(Error::Map(format!(
            "collar parameters eps = {eps}, slack = {slack} out of range"
        )));
    }
    let cap = 1.0 + 0.25 * slack;
    let mut window = (1.0 - eps) * 0.25 * slack;
    for _ in 0..10 {
        let p = Profile::identity_then_flat(1.0 - eps - window, 1.0 - eps, 1.0 - eps, cap)?;
        let radial_sup = p.radial_jacobian_sup();
        let total = radial_sup / ((1.0 - eps) * (1.0 - eps));
        if total <= (1.0 + slack) / ((1.0 - eps) * (1.0 - eps)) {
            let squeeze = PlanarMap::radial(
                Vec2::ZERO,
                RadialScale::Constant { radius: 1.0 },
                p,
            );
            let rescale = PlanarMap::homothety(Vec2::ZERO, 1.0 / (1.0 - eps))?;
            return Ok(PlanarMap::sequence(vec![squeeze, rescale]));
        }
        window *= 0.5;
    }
    Err(Error::Map("no collar profile fits the slack".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianCertificate {
    pub declared: f64,
    /// Richardson-extrapolated maximum of |det D| over the sample region.
    pub measured: f64,
    /// Maximum at the coarser step, before extrapolation.
    pub measured_coarse: f64,
    pub argmax: Vec2,
    pub samples: usize,
    pub skipped: usize,
    pub tol: f64,
    pub ok: bool,
}

/// Measures |det D| of `map` by central differences over an `n x n` sample
/// of the rectangle `[lo, hi]`, extrapolating one step halving. Points where
/// the map rejects a probe are skipped and counted.
pub fn certify_jacobian(
    map: &PlanarMap,
    lo: Vec2,
    hi: Vec2,
    n: usize,
    tol: f64,
) -> Result<JacobianCertificate> {
    if n < 2 || !(hi.x > lo.x) || !(hi.y > lo.y) {
        return Err(Error::Map("certification region is degenerate".into()));
    }
    let span = hi - lo;
    // Step chosen for central differences in f64: small enough to resolve the
    // narrowest profile ramps, large enough that roundoff stays ~1e-11.
    let fd = span.norm() * 1e-5;
    let mut measured = 0.0f64;
    let mut measured_coarse = 0.0f64;
    let mut argmax = lo;
    let mut samples = 0usize;
    let mut skipped = 0usize;
    for j in 0..n {
        for i in 0..n {
            let q = lo
                + v(
                    span.x * i as f64 / (n - 1) as f64,
                    span.y * j as f64 / (n - 1) as f64,
                );
            match (fd_det(map, q, fd), fd_det(map, q, fd * 0.5)) {
                (Some(d1), Some(d2)) => {
                    samples += 1;
                    let extrap = ((4.0 * d2 - d1) / 3.0).abs();
                    measured_coarse = measured_coarse.max(d1.abs());
                    if extrap > measured {
                        measured = extrap;
                        argmax = q;
                    }
                }
                _ => skipped += 1,
            }
        }
    }
    if samples == 0 {
        return Err(Error::Map(
            "certification region lies entirely outside the map domain".into(),
        ));
    }
    let declared = map.declared_jacobian_bound();
    Ok(JacobianCertificate {
        declared,
        measured,
        measured_coarse,
        argmax,
        samples,
        skipped,
        tol,
        ok: measured <= declared + tol,
    })
}

fn fd_det(map: &PlanarMap, q: Vec2, h: f64) -> Option<f64> {
    let xp = map.apply(q + v(h, 0.0)).ok()?;
    let xm = map.apply(q - v(h, 0.0)).ok()?;
    let yp = map.apply(q + v(0.0, h)).ok()?;
    let ym = map.apply(q - v(0.0, h)).ok()?;
    let dx = (xp - xm) / (2.0 * h);
    let dy = (yp - ym) / (2.0 * h);
    Some(dx.x * dy.y - dx.y * dy.x)
}
