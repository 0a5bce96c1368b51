//! Constructive transformations between admissible witnesses, each emitting a
//! certificate that re-measures what its construction claims.
//!
//! The mark-forgetting, push-away and vertex-collapse steps chain into the
//! reduction that turns an (N−1)-marked witness on the unit square into an
//! N-marked one at a controlled cost: forgetting a mark is free, pushing
//! values off the two top corners costs `delta` times a measured cutoff
//! constant, and collapsing the freed stretch of the top edge onto a fresh
//! vertex costs the area-renormalization factor `(1+eps)/(1-eps)`. The collar
//! re-imposition and angle-power transforms play the same budgeted role for
//! circle-valued witnesses.

use serde::Serialize;

use crate::admissible::{check_admissible, AdmissibilityReport, ARC_TOL};
use crate::dist::distance_field;
use crate::error::Error;
use crate::fields::{ScalarField, VectorMapField};
use crate::geometry::{v, ConvexDomain, MarkedBoundary, Vec2};
use crate::maps::{self, PlanarMap};
use crate::profile::smoothstep3;
use crate::sets::{neighborhood, SetConfig};
use crate::Result;

/// Marks and domain corners must sit where a construction expects them to
/// within this distance.
const MARK_TOL: f64 = 1e-9;

/// Re-measured growth record shared by the mark-count transformations:
/// admissibility of both endpoints plus the discrete bracket sup-norms
/// against the construction's budget
/// `output_sup <= claimed_factor * input_sup + claimed_offset + allowance`.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineCertificate {
    pub stage: &'static str,
    pub input_ok: bool,
    pub output_ok: bool,
    pub input_sup: f64,
    pub output_sup: f64,
    pub claimed_factor: f64,
    pub claimed_offset: f64,
    /// Discretization slack granted on top of the continuum budget.
    pub allowance: f64,
    pub input_report: AdmissibilityReport,
    pub output_report: AdmissibilityReport,
    pub pass: bool,
}

impl PipelineCertificate {
    fn seal(
        stage: &'static str,
        input_report: AdmissibilityReport,
        output_report: AdmissibilityReport,
        input_sup: f64,
        output_sup: f64,
        claimed_factor: f64,
        claimed_offset: f64,
        allowance: f64,
    ) -> PipelineCertificate {
        let input_ok = input_report.all_ok();
        let output_ok = output_report.all_ok();
        let pass = input_ok
            && output_ok
            && output_sup <= claimed_factor * input_sup + claimed_offset + allowance;
        PipelineCertificate {
            stage,
            input_ok,
            output_ok,
            input_sup,
            output_sup,
            claimed_factor,
            claimed_offset,
            allowance,
            input_report,
            output_report,
            pass,
        }
    }

    /// The growth bound the certificate enforces.
    pub fn budget(&self) -> f64 {
        self.claimed_factor * self.input_sup + self.claimed_offset + self.allowance
    }
}

fn admissibility_error(stage: &str, side: &str, report: &AdmissibilityReport) -> Error {
    let mut parts = Vec::new();
    for (k, ok) in report.set_ok.iter().enumerate() {
        if !ok {
            if let Some(o) = &report.worst[k] {
                parts.push(format!(
                    "set {}: node ({}, {}) lands at ({:.6}, {:.6}), {:.3e} off its arc",
                    k + 1,
                    o.node.0,
                    o.node.1,
                    o.at.x,
                    o.at.y,
                    o.arc_dist
                ));
            }
        }
    }
    if !report.cs_ok {
        parts.push(format!("frame deviates by {:.3e}", report.cs_deviation));
    }
    Error::Pipeline(format!(
        "{stage}: {side} witness fails admissibility: {}",
        parts.join("; ")
    ))
}

/// Drops the last mark by fusing the last two sets: a witness for
/// `(X_1, ..., X_N)` is also one for `(X_1, ..., X_{N-2}, X_{N-1} ∪ X_N)` on
/// the boundary with the last mark removed, because the fused arc contains
/// both original arcs. The field is untouched, so the bracket is bit-equal
/// and any re-verification failure indicates a bug rather than a math
/// failure.
pub fn forget_point(
    phi: &VectorMapField,
    config: &SetConfig,
    mb: &MarkedBoundary,
    radius: f64,
) -> Result<(SetConfig, MarkedBoundary, PipelineCertificate)> {
    if mb.len() != config.n() {
        return Err(Error::Pipeline(format!(
            "forget_point: {} sets but {} marks",
            config.n(),
            mb.len()
        )));
    }
    let merged = config.merge_last_two()?;
    let fractions = mb.fractions();
    let merged_mb =
        MarkedBoundary::from_fractions(mb.domain().clone(), &fractions[..fractions.len() - 1])?;
    let input_report = check_admissible(phi, config, mb, radius);
    if !input_report.all_ok() {
        return Err(admissibility_error("forget_point", "input", &input_report));
    }
    let output_report = check_admissible(phi, &merged, &merged_mb, radius);
    if !output_report.all_ok() {
        return Err(admissibility_error("forget_point", "merged", &output_report));
    }
    let sup = phi.bracket().sup_norm();
    let cert = PipelineCertificate::seal(
        "forget_point",
        input_report,
        output_report,
        sup,
        sup,
        1.0,
        0.0,
        0.0,
    );
    Ok((merged, merged_mb, cert))
}

/// The reduction steps assume the merged layout: unit square domain, first
/// mark at (0, 1), last at (1, 1), the rest on the bottom edge.
fn require_square_layout(mb: &MarkedBoundary) -> Result<()> {
    let corners = [v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
    let square = (mb.domain().area() - 1.0).abs() <= MARK_TOL
        && corners.iter().all(|&c| mb.domain().project(c).1 <= MARK_TOL);
    if !square {
        return Err(Error::Pipeline(
            "the reduction steps need the unit square [0,1]x[0,1] as domain".into(),
        ));
    }
    let n = mb.len();
    let first = mb.point(0);
    let last = mb.point(n - 1);
    if first.dist(v(0.0, 1.0)) > MARK_TOL || last.dist(v(1.0, 1.0)) > MARK_TOL {
        return Err(Error::Pipeline(format!(
            "expected corner marks (0, 1) and (1, 1), found ({:.6}, {:.6}) and ({:.6}, {:.6})",
            first.x, first.y, last.x, last.y
        )));
    }
    for k in 1..n - 1 {
        let p = mb.point(k);
        if p.y.abs() > MARK_TOL {
            return Err(Error::Pipeline(format!(
                "expected mark {} on the bottom edge, found ({:.6}, {:.6})",
                k + 1,
                p.x,
                p.y
            )));
        }
    }
    Ok(())
}

/// Extra measurements behind a [`push_away`] certificate.
#[derive(Debug, Clone, Serialize)]
pub struct PushAwayCertificate {
    pub base: PipelineCertificate,
    pub eps0: f64,
    pub delta: f64,
    /// Measured `sup |{rho_first, phi_2}| + sup |{rho_last, phi_2}|`; the
    /// bracket grows by at most `delta` times this.
    pub c_rho: f64,
    /// Grid distance from each approach region to the nearest node its
    /// cutoff must not touch; infinite when nothing needed pushing.
    pub separation_first: f64,
    pub separation_last: f64,
    /// Post-push distance of the two split sets' values from the corner
    /// each one flees.
    pub clearance_first: f64,
    pub clearance_last: f64,
    /// The untouched sets kept bit-identical values.
    pub untouched_exact: bool,
}

/// Cutoff equal to one on the approach region (nodes of the pushed set's
/// dilation whose values sit within `eps0/2` of `corner`) and supported
/// inside a third of the measured separation, so it vanishes on every node
/// it must not move: the untouched sets' dilations and all far-valued nodes.
fn corner_cutoff(
    phi: &VectorMapField,
    blockers: &[&Vec<bool>],
    pushed_dil: &[bool],
    pushed_set: usize,
    corner: Vec2,
    eps0: f64,
) -> Result<(Vec<f64>, f64)> {
    let grid = phi.grid().clone();
    let len = grid.len();
    let mut core = vec![false; len];
    let mut any = false;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            if pushed_dil[idx] && phi.at(i, j).dist(corner) <= 0.5 * eps0 {
                core[idx] = true;
                any = true;
            }
        }
    }
    if !any {
        return Ok((vec![0.0; len], f64::INFINITY));
    }
    let d = distance_field(&core, grid.nx, grid.ny, grid.h, grid.is_wrapping());
    let mut sep = f64::INFINITY;
    let mut culprit = String::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            if d[idx] >= sep {
                continue;
            }
            let blocked = blockers.iter().position(|m| m[idx]);
            if blocked.is_some() || phi.at(i, j).dist(corner) >= eps0 {
                sep = d[idx];
                culprit = match blocked {
                    Some(b) => format!("the dilation of set {}", b + 1),
                    None => "a far-valued node".to_string(),
                };
            }
        }
    }
    if sep < 6.0 * grid.h {
        return Err(Error::Pipeline(format!(
            "push_away: the approach region of set {} toward ({:.0}, {:.0}) is {:.3e} \
             from {}, but the cutoff needs 6 h = {:.3e} of room; refine the grid \
             or widen the value gradation",
            pushed_set + 1,
            corner.x,
            corner.y,
            sep,
            culprit,
            6.0 * grid.h
        )));
    }
    let r1 = sep / 3.0;
    let r2 = 2.0 * sep / 3.0;
    let mut rho = vec![0.0; len];
    for (idx, r) in rho.iter_mut().enumerate() {
        if d[idx] < r2 {
            *r = smoothstep3((r2 - d[idx]) / (r2 - r1));
        }
    }
    Ok((rho, sep))
}

/// Pushes the last two sets' values off the top corners: the second-to-last
/// set's values leave the `delta`-ball around (0, 1), the last set's leave
/// the one around (1, 1), both sliding along the top edge under
/// `phi_1 + delta * (rho_first - rho_last)`. All other sets keep their
/// values bit for bit, and because the difference formulas are linear in the
/// node values the bracket grows by exactly at most `delta` times the
/// measured cutoff constant.
///
/// `config` holds the N sets whose last two were merged for `mb`'s N−1
/// marks; admissibility is checked against the merged tuple on both sides.
pub fn push_away(
    phi: &VectorMapField,
    config: &SetConfig,
    mb: &MarkedBoundary,
    eps0: f64,
    delta: f64,
    radius: f64,
) -> Result<(VectorMapField, PushAwayCertificate)> {
    let n = config.n();
    let merged = config.merge_last_two()?;
    if mb.len() != n - 1 {
        return Err(Error::Pipeline(format!(
            "push_away: {n} sets need {} marks, found {}",
            n - 1,
            mb.len()
        )));
    }
    require_square_layout(mb)?;
    if !(eps0 > 0.0 && eps0 < 1.0 / 3.0) {
        return Err(Error::Pipeline(format!(
            "push_away: eps0 = {eps0} must lie in (0, 1/3)"
        )));
    }
    if !(delta > 0.0 && delta < 0.5 * eps0) {
        return Err(Error::Pipeline(format!(
            "push_away: delta = {delta} must lie in (0, eps0/2) = (0, {})",
            0.5 * eps0
        )));
    }
    let input_report = check_admissible(phi, &merged, mb, radius);
    if !input_report.all_ok() {
        return Err(admissibility_error("push_away", "input", &input_report));
    }

    let grid = phi.grid().clone();
    let len = grid.len();
    let dilated: Vec<Vec<bool>> = config
        .masks()
        .iter()
        .map(|m| neighborhood(&grid, m, radius))
        .collect::<Result<_>>()?;
    let blockers: Vec<&Vec<bool>> = dilated[..n - 2].iter().collect();
    let corner_first = v(0.0, 1.0);
    let corner_last = v(1.0, 1.0);
    let (rho_first, separation_first) =
        corner_cutoff(phi, &blockers, &dilated[n - 2], n - 2, corner_first, eps0)?;
    let (rho_last, separation_last) =
        corner_cutoff(phi, &blockers, &dilated[n - 1], n - 1, corner_last, eps0)?;

    let mut pushed = phi.phi1.values().to_vec();
    for idx in 0..len {
        // Branch keeps untouched nodes bit-identical: x + 0.0 is not the
        // identity on -0.0.
        if rho_first[idx] != 0.0 || rho_last[idx] != 0.0 {
            pushed[idx] += delta * (rho_first[idx] - rho_last[idx]);
        }
    }
    let untouched_exact = (0..n - 2).all(|k| {
        (0..len).all(|idx| {
            !dilated[k][idx] || pushed[idx].to_bits() == phi.phi1.values()[idx].to_bits()
        })
    });
    let mut clearance_first = f64::INFINITY;
    let mut clearance_last = f64::INFINITY;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            let q = v(pushed[idx], phi.phi2.values()[idx]);
            if dilated[n - 2][idx] {
                clearance_first = clearance_first.min(q.dist(corner_first));
            }
            if dilated[n - 1][idx] {
                clearance_last = clearance_last.min(q.dist(corner_last));
            }
        }
    }

    let rho_first = ScalarField::from_values(grid.clone(), rho_first);
    let rho_last = ScalarField::from_values(grid.clone(), rho_last);
    let c_rho = rho_first.poisson_bracket(&phi.phi2).sup_norm()
        + rho_last.poisson_bracket(&phi.phi2).sup_norm();

    let phi_tilde = VectorMapField {
        phi1: ScalarField::from_values(grid.clone(), pushed),
        phi2: phi.phi2.clone(),
        basepoint: phi.basepoint,
    };
    let output_report = check_admissible(&phi_tilde, &merged, mb, radius);
    if !output_report.all_ok() {
        return Err(admissibility_error("push_away", "output", &output_report));
    }
    let input_sup = phi.bracket().sup_norm();
    let output_sup = phi_tilde.bracket().sup_norm();
    // The growth bound is exact at the difference-formula level; the
    // allowance only absorbs floating-point rounding of the re-measured
    // norms.
    let allowance = 1e-9 * (1.0 + input_sup);
    let base = PipelineCertificate::seal(
        "push_away",
        input_report,
        output_report,
        input_sup,
        output_sup,
        1.0,
        delta * c_rho,
        allowance,
    );
    Ok((
        phi_tilde,
        PushAwayCertificate {
            base,
            eps0,
            delta,
            c_rho,
            separation_first,
            separation_last,
            clearance_first,
            clearance_last,
            untouched_exact,
        },
    ))
}

/// Extra measurements behind a [`collapse_vertex`] certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CollapseCertificate {
    pub base: PipelineCertificate,
    pub eps: f64,
    pub delta: f64,
    /// The new mark every overlap value collapses onto.
    pub apex: Vec2,
    /// Homothety length factor restoring unit area.
    pub scale: f64,
    /// Pre-collapse distances of the split sets' values from the corners.
    pub clearance_first: f64,
    pub clearance_last: f64,
    pub domain_area: f64,
}

/// Collapses the middle of the top edge onto a fresh vertex, turning the
/// pushed (N−1)-marked witness into an N-marked one.
///
/// The unit square's top edge is replaced by a shallow roof of area deficit
/// `eps`: the apex sits below the midpoint and the two roof lines extended
/// meet the old top edge exactly at x = `delta` and x = 1 − `delta`. Values
/// between those abscissae pin onto the apex, values past them fold onto the
/// near ends of the roof, values on the old side edges above the roof fold
/// onto its far ends, and everything else — in particular every pinned edge
/// point — stays fixed bit for bit. The folds are exact, so the pointwise
/// area distortion is 0 or 1 and the only growth is the unit-area rescale,
/// bounded by `(1+eps)/(1-eps)`. Difference stencils across the fold lines
/// can exceed the pointwise bound by an amount that does not vanish with
/// `h`; callers needing the sharp bound smooth the composite afterwards and
/// re-certify (see the solver's polish step).
pub fn collapse_vertex(
    phi: &VectorMapField,
    config: &SetConfig,
    mb: &MarkedBoundary,
    eps: f64,
    delta: f64,
    radius: f64,
) -> Result<(VectorMapField, MarkedBoundary, CollapseCertificate)> {
    let n = config.n();
    let merged = config.merge_last_two()?;
    if mb.len() != n - 1 {
        return Err(Error::Pipeline(format!(
            "collapse_vertex: {n} sets need {} marks, found {}",
            n - 1,
            mb.len()
        )));
    }
    require_square_layout(mb)?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Pipeline(format!(
            "collapse_vertex: eps = {eps} must lie in (0, 0.5)"
        )));
    }
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::Pipeline(format!(
            "collapse_vertex: delta = {delta} must lie in (0, 0.25)"
        )));
    }
    let input_report = check_admissible(phi, &merged, mb, radius);
    if !input_report.all_ok() {
        return Err(admissibility_error("collapse_vertex", "input", &input_report));
    }

    let grid = phi.grid().clone();
    let corner_first = v(0.0, 1.0);
    let corner_last = v(1.0, 1.0);
    let dil_first = neighborhood(&grid, config.mask(n - 2), radius)?;
    let dil_last = neighborhood(&grid, config.mask(n - 1), radius)?;
    let mut clearance_first = f64::INFINITY;
    let mut clearance_last = f64::INFINITY;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            if dil_first[idx] {
                clearance_first = clearance_first.min(phi.at(i, j).dist(corner_first));
            }
            if dil_last[idx] {
                clearance_last = clearance_last.min(phi.at(i, j).dist(corner_last));
            }
        }
    }
    let usable = clearance_first.min(clearance_last);
    if usable < delta * (1.0 - 1e-9) {
        return Err(Error::Pipeline(format!(
            "collapse_vertex: split-set values approach the freed corners to \
             {usable:.6e}; the largest usable delta is {usable:.6e}, got {delta}"
        )));
    }

    // Roofed replacement domain: apex height and side height chosen so the
    // area is exactly 1 - eps and each roof line extended passes through
    // (delta, 1) resp. (1 - delta, 1).
    let q_w = 1.0 - 2.0 * delta;
    let drop = 2.0 * eps * q_w / (1.0 + 2.0 * q_w);
    let y_apex = 1.0 - drop;
    let y_side = 1.0 - drop * (1.0 + q_w) / q_w;
    let apex = v(0.5, y_apex);
    debug_assert!((0.5 * (y_apex + y_side) - (1.0 - eps)).abs() < 1e-12);
    let e_a = (v(delta, 1.0) - apex).unit();
    let e_b = (v(1.0 - delta, 1.0) - apex).unit();
    let scale = 1.0 / (1.0 - eps).sqrt();
    let g = PlanarMap::sequence(vec![
        PlanarMap::corner_pin(apex, e_a, e_b)?,
        PlanarMap::homothety(Vec2::ZERO, scale)?,
    ]);
    let phi_hat = phi.postcompose(|p| g.apply(p))?;

    let pent = ConvexDomain::polygon(vec![
        Vec2::ZERO,
        v(scale, 0.0),
        v(scale, scale * y_side),
        apex * scale,
        v(0.0, scale * y_side),
    ])?;
    let domain_area = pent.area();
    let mut marks = Vec::with_capacity(n);
    for k in 0..n - 1 {
        marks.push(snap(&pent, g.apply(mb.point(k))?));
    }
    marks.push(snap(&pent, apex * scale));
    let new_apex = marks[n - 1];
    let out_mb = MarkedBoundary::from_points(pent, &marks)?;

    let output_report = check_admissible(&phi_hat, config, &out_mb, radius);
    if !output_report.all_ok() {
        return Err(admissibility_error("collapse_vertex", "output", &output_report));
    }
    let input_sup = phi.bracket().sup_norm();
    let output_sup = phi_hat.bracket().sup_norm();
    let allowance = 10.0 * grid.h * (1.0 + input_sup);
    let base = PipelineCertificate::seal(
        "collapse_vertex",
        input_report,
        output_report,
        input_sup,
        output_sup,
        (1.0 + eps) / (1.0 - eps),
        0.0,
        allowance,
    );
    Ok((
        phi_hat,
        out_mb,
        CollapseCertificate {
            base,
            eps,
            delta,
            apex: new_apex,
            scale,
            clearance_first,
            clearance_last,
            domain_area,
        },
    ))
}

/// Re-projects a computed mark onto the domain boundary, absorbing the last
/// few ulps of map arithmetic.
fn snap(domain: &ConvexDomain, q: Vec2) -> Vec2 {
    let (t, _) = domain.project(q);
    domain.point_at(t)
}

/// Circle-valued analogue of the arc check: every node within `radius` of
/// the constraint mask must land within `ARC_TOL` of the unit circle, and
/// the frame must sit at the basepoint.
#[derive(Debug, Clone, Serialize)]
pub struct CircleReport {
    pub radius: f64,
    pub tol: f64,
    /// Worst distance from the unit circle over the dilated mask.
    pub worst: f64,
    pub ok: bool,
    pub cs_ok: bool,
    pub cs_deviation: f64,
}

impl CircleReport {
    pub fn all_ok(&self) -> bool {
        self.ok && self.cs_ok
    }
}

pub fn check_circle_valued(
    phi: &VectorMapField,
    mask: &[bool],
    radius: f64,
) -> Result<CircleReport> {
    let grid = phi.grid();
    if mask.len() != grid.len() {
        return Err(Error::Pipeline(format!(
            "constraint mask has {} nodes, the grid has {}",
            mask.len(),
            grid.len()
        )));
    }
    let dilated = neighborhood(grid, mask, radius)?;
    let mut worst = 0.0f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if dilated[grid.idx(i, j)] {
                worst = worst.max((phi.at(i, j).norm() - 1.0).abs());
            }
        }
    }
    let cs_deviation = phi.frame_deviation();
    Ok(CircleReport {
        radius,
        tol: ARC_TOL,
        worst,
        ok: worst <= ARC_TOL,
        cs_ok: grid.is_wrapping() || cs_deviation <= ARC_TOL,
        cs_deviation,
    })
}

/// Certificate of a [`retract_rescale`] application. The factor applies to
/// the claimed premise bound, not the full input sup:
/// `output_sup <= claimed_factor * claimed_inner_sup + allowance`.
#[derive(Debug, Clone, Serialize)]
pub struct RescaleCertificate {
    pub eps: f64,
    /// Premise: bracket bound over nodes valued in the area-(1−eps) disc.
    pub claimed_inner_sup: f64,
    pub measured_inner_sup: f64,
    /// Largest movement of a circle-pinned value.
    pub pinned_deviation: f64,
    pub input_sup: f64,
    pub output_sup: f64,
    pub claimed_factor: f64,
    pub allowance: f64,
    pub input_circle: CircleReport,
    pub output_circle: CircleReport,
    pub pass: bool,
}

/// Collar re-imposition for circle-valued witnesses: values in the collar
/// between the area-(1−eps) disc and the unit circle land exactly on the
/// circle and everything is rescaled back to unit area, so values already on
/// the circle return unchanged. The premise `claimed_inner_sup` bounds the
/// bracket over nodes valued inside the shrunk disc; the certified growth
/// factor is `(1+eps)/(1-eps)` against that premise. This is also the
/// solver's projection step.
pub fn retract_rescale(
    phi: &VectorMapField,
    x_mask: &[bool],
    eps: f64,
    claimed_inner_sup: f64,
    radius: f64,
) -> Result<(VectorMapField, RescaleCertificate)> {
    if !(eps > 0.0 && eps < 0.75) {
        return Err(Error::Pipeline(format!(
            "retract_rescale: eps = {eps} must lie in (0, 0.75)"
        )));
    }
    if !(claimed_inner_sup >= 0.0) {
        return Err(Error::Pipeline(format!(
            "retract_rescale: claimed premise bound {claimed_inner_sup} is not a bound"
        )));
    }
    let input_circle = check_circle_valued(phi, x_mask, radius)?;
    if !input_circle.all_ok() {
        return Err(Error::Pipeline(format!(
            "retract_rescale: input values leave the circle by {:.3e} (frame by {:.3e})",
            input_circle.worst, input_circle.cs_deviation
        )));
    }

    let grid = phi.grid().clone();
    let r_inner = (1.0 - eps).sqrt();
    let bracket = phi.bracket();
    let mut measured_inner_sup = 0.0f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if phi.at(i, j).norm() <= r_inner {
                measured_inner_sup = measured_inner_sup.max(bracket.at(i, j).abs());
            }
        }
    }
    if measured_inner_sup > claimed_inner_sup + 1e-9 * (1.0 + claimed_inner_sup) {
        return Err(Error::Pipeline(format!(
            "retract_rescale: measured premise sup {measured_inner_sup:.6e} exceeds \
             the claimed bound {claimed_inner_sup:.6e}"
        )));
    }

    // Radius shrink realizing the area deficit: the collar beyond radius
    // sqrt(1-eps) flattens onto that circle and the rescale restores both
    // the radius and the area, with total distortion at most
    // (1+eps)/(1-eps).
    let map = maps::retract_rescale(1.0 - r_inner, eps)?;
    let claimed_factor = (1.0 + eps) / (1.0 - eps);
    debug_assert!(map.declared_jacobian_bound() <= claimed_factor + 1e-12);
    let phi_out = phi.postcompose(|q| map.apply(q))?;

    let dilated = neighborhood(&grid, x_mask, radius)?;
    let mut pinned_deviation = 0.0f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if dilated[grid.idx(i, j)] {
                pinned_deviation = pinned_deviation.max(phi.at(i, j).dist(phi_out.at(i, j)));
            }
        }
    }
    if pinned_deviation > 1e-9 {
        return Err(Error::Pipeline(format!(
            "retract_rescale: circle-pinned values moved by {pinned_deviation:.3e}"
        )));
    }
    let output_circle = check_circle_valued(&phi_out, x_mask, radius)?;
    let input_sup = bracket.sup_norm();
    let output_sup = phi_out.bracket().sup_norm();
    let allowance = 10.0 * grid.h * (1.0 + input_sup);
    let pass = output_circle.all_ok()
        && output_sup <= claimed_factor * claimed_inner_sup + allowance;
    let cert = RescaleCertificate {
        eps,
        claimed_inner_sup,
        measured_inner_sup,
        pinned_deviation,
        input_sup,
        output_sup,
        claimed_factor,
        allowance,
        input_circle,
        output_circle,
        pass,
    };
    Ok((phi_out, cert))
}

/// Certificate of a [`power_transform`] application.
#[derive(Debug, Clone, Serialize)]
pub struct PowerCertificate {
    pub k: u32,
    pub eps: f64,
    pub input_sup: f64,
    pub output_sup: f64,
    pub claimed_factor: f64,
    pub allowance: f64,
    pub windings_in: Vec<i64>,
    pub windings_out: Vec<i64>,
    /// Every output winding equals k times its input, as integers.
    pub windings_exact: bool,
    pub input_circle: CircleReport,
    pub output_circle: CircleReport,
    pub pass: bool,
}

/// Multiplies the angle of every value by `k`, keeping radii: a circle-valued
/// witness of winding class `w` becomes one of class `k * w` on each supplied
/// generator loop, at certified growth factor `k (1+eps)/(1-eps)` (the
/// pointwise distortion is exactly `k`; the slack mirrors the collar budget
/// callers compose with).
pub fn power_transform(
    phi: &VectorMapField,
    x_mask: &[bool],
    loops: &[Vec<(usize, usize)>],
    k: u32,
    eps: f64,
    radius: f64,
) -> Result<(VectorMapField, PowerCertificate)> {
    if k == 0 {
        return Err(Error::Pipeline(
            "power_transform: k = 0 collapses every class to zero".into(),
        ));
    }
    let input_circle = check_circle_valued(phi, x_mask, radius)?;
    if !input_circle.all_ok() {
        return Err(Error::Pipeline(format!(
            "power_transform: input values leave the circle by {:.3e} (frame by {:.3e})",
            input_circle.worst, input_circle.cs_deviation
        )));
    }
    let map = maps::power_map(k, eps)?;
    let phi_out = phi.postcompose(|q| map.apply(q))?;
    let output_circle = check_circle_valued(&phi_out, x_mask, radius)?;

    let mut windings_in = Vec::with_capacity(loops.len());
    let mut windings_out = Vec::with_capacity(loops.len());
    for l in loops {
        windings_in.push(crate::admissible::winding_number(phi, l, Vec2::ZERO)?);
        windings_out.push(crate::admissible::winding_number(&phi_out, l, Vec2::ZERO)?);
    }
    let windings_exact = windings_in
        .iter()
        .zip(&windings_out)
        .all(|(a, b)| *b == k as i64 * *a);

    let input_sup = phi.bracket().sup_norm();
    let output_sup = phi_out.bracket().sup_norm();
    let claimed_factor = map.declared_jacobian_bound();
    let allowance = 10.0 * phi.grid().h * k as f64 * (1.0 + input_sup);
    let pass = output_circle.all_ok()
        && windings_exact
        && output_sup <= claimed_factor * input_sup + allowance;
    let cert = PowerCertificate {
        k,
        eps,
        input_sup,
        output_sup,
        claimed_factor,
        allowance,
        windings_in,
        windings_out,
        windings_exact,
        input_circle,
        output_circle,
        pass,
    };
    Ok((phi_out, cert))
}
