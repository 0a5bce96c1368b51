//! Admissible maps for a marked domain: nodes near set `i` must land on the
//! boundary arc `gamma_i`, and on non-compact grids the map must equal a
//! fixed base value outside a compact region.
//!
//! The initializer builds such a map from mollified distance bumps: each node
//! sees at most two active sets, always cyclic neighbours, and its image
//! slides along the boundary between the corresponding arc anchors while a
//! radial factor pins points near sets onto the boundary and releases far
//! nodes to the base value. Homotopy data is carried extensionally, as
//! winding numbers along generator loops.

use serde::Serialize;

use rayon::prelude::*;

use crate::error::Error;
use crate::fields::{GridManifold, ScalarField, VectorMapField};
use crate::geometry::{MarkedBoundary, Vec2};
use crate::profile::smoothstep3;
use crate::sets::{neighborhood, SetConfig};
use crate::Result;

/// Image must sit within this distance of its arc to count as on it.
pub const ARC_TOL: f64 = 1e-9;

/// One failing node: grid index pair, position, and distance to the arc.
#[derive(Debug, Clone, Serialize)]
pub struct Offender {
    pub node: (usize, usize),
    pub at: Vec2,
    pub arc_dist: f64,
}

/// Outcome of checking a map against a set tuple and marked boundary.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// Dilation radius applied to each mask before checking.
    pub radius: f64,
    pub tol: f64,
    /// Per-set verdict: every node of the dilated mask maps onto the arc.
    pub set_ok: Vec<bool>,
    /// Worst offending node per failing set.
    pub worst: Vec<Option<Offender>>,
    /// Compact-support verdict; vacuously true on a torus.
    pub cs_ok: bool,
    pub cs_deviation: f64,
}

impl AdmissibilityReport {
    pub fn all_ok(&self) -> bool {
        self.cs_ok && self.set_ok.iter().all(|&b| b)
    }
}

/// Integer windings of a map along a family of generator loops.
#[derive(Debug, Clone, Serialize)]
pub struct HomotopyClass {
    pub loops: Vec<Vec<(usize, usize)>>,
    pub windings: Vec<i64>,
}

/// Checks that dilated masks map onto their arcs and that the frame sits at
/// the base value. Reports, never fails.
pub fn check_admissible(
    phi: &VectorMapField,
    config: &SetConfig,
    mb: &MarkedBoundary,
    radius: f64,
) -> AdmissibilityReport {
    let grid = config.grid();
    assert_eq!(
        phi.grid().as_ref(),
        grid.as_ref(),
        "map and set tuple live on different grids"
    );
    assert_eq!(mb.len(), config.n(), "marked points must match the sets");
    let mut set_ok = Vec::with_capacity(config.n());
    let mut worst = Vec::with_capacity(config.n());
    for k in 0..config.n() {
        let dilated = neighborhood(grid, config.mask(k), radius)
            .expect("mask and radius were validated");
        let mut bad: Option<Offender> = None;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if !dilated[grid.idx(i, j)] {
                    continue;
                }
                let img = phi.at(i, j);
                let d = mb.arc_dist(k, img);
                if d > ARC_TOL && bad.as_ref().is_none_or(|b| d > b.arc_dist) {
                    bad = Some(Offender { node: (i, j), at: img, arc_dist: d });
                }
            }
        }
        set_ok.push(bad.is_none());
        worst.push(bad);
    }
    let cs_deviation = phi.frame_deviation();
    let cs_ok = grid.is_wrapping() || cs_deviation <= ARC_TOL;
    AdmissibilityReport {
        radius,
        tol: ARC_TOL,
        set_ok,
        worst,
        cs_ok,
        cs_deviation,
    }
}

/// Largest partition width for which every node's active sets form one
/// cyclically adjacent pair.
fn pair_width_limit(n: usize, dists: &[Vec<f64>], nodes: usize) -> f64 {
    let mut limit = f64::INFINITY;
    for idx in 0..nodes {
        let r = if n == 3 {
            // All pairs are adjacent; only a triple overlap is fatal.
            dists.iter().map(|d| d[idx]).fold(0.0f64, f64::max)
        } else {
            let mut r = f64::INFINITY;
            for i in 0..n {
                for j in i + 1..n {
                    let gap = j - i;
                    if gap == 1 || gap == n - 1 {
                        continue;
                    }
                    r = r.min(dists[i][idx].max(dists[j][idx]));
                }
            }
            r
        };
        limit = limit.min(r);
    }
    limit
}

/// Builds an admissible map for the tuple: nodes within `2.5h` of set `i`
/// land exactly on arc `gamma_i`, overlap nodes land on the shared mark, and
/// everything beyond the partition width sits at the domain's inner center.
pub fn initial_admissible_map(
    config: &SetConfig,
    mb: &MarkedBoundary,
) -> Result<VectorMapField> {
    config.validate()?;
    let n = config.n();
    if mb.len() != n {
        return Err(Error::Admissible(format!(
            "{n} sets but {} marked points",
            mb.len()
        )));
    }
    let grid = config.grid().clone();
    let h = grid.h;
    let dists: Vec<Vec<f64>> = (0..n).map(|i| config.distance_to(i)).collect();
    let limit = pair_width_limit(n, &dists, grid.len());
    // On a box the bumps must die out before the frame, or the far field
    // cannot sit at the base value.
    let frame_clear = if grid.is_wrapping() {
        f64::INFINITY
    } else {
        let mut clear = f64::INFINITY;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.on_frame(i, j) {
                    let idx = grid.idx(i, j);
                    for d in &dists {
                        clear = clear.min(d[idx]);
                    }
                }
            }
        }
        clear
    };
    let w0 = 2.5 * h;
    let w = (0.75 * limit).min(0.95 * frame_clear);
    if !(w >= w0 + 1.5 * h) {
        return Err(Error::Admissible(format!(
            "sets too close for an h-scale partition: h = {h:.3e} but the \
             overlap structure needs h <= {:.3e}",
            w / 4.0
        )));
    }

    let per = mb.domain().perimeter();
    let params: Vec<f64> = mb.fractions().iter().map(|f| f * per).collect();
    let arc_len: Vec<f64> =
        (0..n).map(|k| (params[(k + 1) % n] - params[k]).rem_euclid(per)).collect();
    let z = mb.domain().inner_center();
    let bump = |d: f64| smoothstep3((w - d) / (w - w0));

    let values: Vec<Vec2> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let mut active: Vec<(usize, f64)> = Vec::with_capacity(2);
            for (i, d) in dists.iter().enumerate() {
                let u = bump(d[idx]);
                if u > 0.0 {
                    active.push((i, u));
                }
            }
            match active.len() {
                0 => Ok(z),
                1 => {
                    let (k, u) = active[0];
                    let anchor = mb.domain().point_at(params[k] + arc_len[k] / 2.0);
                    Ok(z + (anchor - z) * u)
                }
                2 => {
                    // Order as the cyclic pair (a, a+1).
                    let ((a, ua), (b, ub)) =
                        if (active[0].0 + 1) % n == active[1].0 {
                            (active[0], active[1])
                        } else if (active[1].0 + 1) % n == active[0].0 {
                            (active[1], active[0])
                        } else {
                            return Err(Error::Admissible(format!(
                                "sets {} and {} are both active at one node",
                                active[0].0 + 1,
                                active[1].0 + 1
                            )));
                        };
                    let theta = ub / (ua + ub);
                    // Walk the boundary from the a-anchor through the shared
                    // mark to the b-anchor.
                    let t = if theta <= 0.5 {
                        params[a] + arc_len[a] / 2.0 + theta * arc_len[a]
                    } else {
                        params[b] + (theta - 0.5) * arc_len[b]
                    };
                    let r = ua.max(ub);
                    Ok(z + (mb.domain().point_at(t) - z) * r)
                }
                _ => Err(Error::Admissible(
                    "more than two sets active at one node".into(),
                )),
            }
        })
        .collect::<Result<Vec<Vec2>>>()?;

    let phi = VectorMapField {
        phi1: ScalarField::from_values(grid.clone(), values.iter().map(|p| p.x).collect()),
        phi2: ScalarField::from_values(grid, values.iter().map(|p| p.y).collect()),
        basepoint: Some(z),
    };
    let report = check_admissible(&phi, config, mb, 2.0 * h);
    if !report.all_ok() {
        return Err(Error::Admissible(format!(
            "initializer failed its own admissibility check: {report:?}"
        )));
    }
    Ok(phi)
}

/// Total winding of `phi - center` along a closed node path. Consecutive
/// angle jumps must stay below a half turn, otherwise the sampling cannot
/// distinguish the class and the caller must refine.
pub fn winding_number(
    phi: &VectorMapField,
    path: &[(usize, usize)],
    center: Vec2,
) -> Result<i64> {
    if path.len() < 2 {
        return Err(Error::Winding("a loop needs at least two nodes".into()));
    }
    let mut total = 0.0;
    for k in 0..path.len() {
        let (i0, j0) = path[k];
        let (i1, j1) = path[(k + 1) % path.len()];
        let a = phi.at(i0, j0) - center;
        let b = phi.at(i1, j1) - center;
        if a.norm() <= 1e-9 || b.norm() <= 1e-9 {
            return Err(Error::Winding(format!(
                "image at node ({i0}, {j0}) or ({i1}, {j1}) is too close to \
                 the winding center"
            )));
        }
        let jump = a.cross(b).atan2(a.dot(b));
        if jump.abs() >= std::f64::consts::PI - 1e-9 {
            return Err(Error::Winding(format!(
                "angle jump {jump:.4} between nodes ({i0}, {j0}) and \
                 ({i1}, {j1}) reaches a half turn; refine the loop"
            )));
        }
        total += jump;
    }
    let turns = total / std::f64::consts::TAU;
    let rounded = turns.round();
    if (turns - rounded).abs() > 0.25 {
        return Err(Error::Winding(format!(
            "winding {turns:.6} is not close to an integer"
        )));
    }
    Ok(rounded as i64)
}

fn mask_connected(grid: &GridManifold, mask: &[bool]) -> bool {
    let total = mask.iter().filter(|&&b| b).count();
    let Some(start) = mask.iter().position(|&b| b) else {
        return false;
    };
    let mut seen = vec![false; mask.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    while let Some(idx) = stack.pop() {
        count += 1;
        let (i, j) = (idx % grid.nx, idx / grid.nx);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let Some(nb) = step(grid, i, j, di, dj) else {
                    continue;
                };
                let nidx = grid.idx(nb.0, nb.1);
                if mask[nidx] && !seen[nidx] {
                    seen[nidx] = true;
                    stack.push(nidx);
                }
            }
        }
    }
    count == total
}

/// One king-move step, wrapping on the torus and rejecting walks off a box.
fn step(grid: &GridManifold, i: usize, j: usize, di: i64, dj: i64) -> Option<(usize, usize)> {
    let (ni, nj) = (i as i64 + di, j as i64 + dj);
    if grid.is_wrapping() {
        Some((
            ni.rem_euclid(grid.nx as i64) as usize,
            nj.rem_euclid(grid.ny as i64) as usize,
        ))
    } else if ni >= 0 && nj >= 0 && (ni as usize) < grid.nx && (nj as usize) < grid.ny {
        Some((ni as usize, nj as usize))
    } else {
        None
    }
}

/// Moore boundary trace of a connected mask: the closed chain of mask nodes
/// touching the outside, walked with the outside kept on the left.
pub fn trace_boundary_loop(grid: &GridManifold, mask: &[bool]) -> Result<Vec<(usize, usize)>> {
    if !mask.iter().any(|&b| b) {
        return Err(Error::Admissible("cannot trace an empty mask".into()));
    }
    if !mask_connected(grid, mask) {
        return Err(Error::Admissible(
            "mask is disconnected; supply generator loops explicitly".into(),
        ));
    }
    let at = |p: (usize, usize)| mask[grid.idx(p.0, p.1)];
    // Lowest row, then lowest column: a node whose west neighbour is outside.
    let start = (0..grid.len())
        .map(|idx| (idx % grid.nx, idx / grid.nx))
        .find(|&(i, j)| {
            at((i, j)) && step(grid, i, j, -1, 0).map(at) != Some(true)
        })
        .ok_or_else(|| {
            Error::Admissible("mask has no exposed boundary node".into())
        })?;

    // Moore neighbourhood in counter-clockwise order starting east.
    const RING: [(i64, i64); 8] = [
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
    ];
    let mut path = vec![start];
    let mut cur = start;
    // Direction pointing back at the empty node we entered from (west).
    let mut back = 4usize;
    loop {
        let mut found = None;
        for s in 1..=8 {
            let dir = (back + s) % 8;
            let Some(nb) = step(grid, cur.0, cur.1, RING[dir].0, RING[dir].1) else {
                continue;
            };
            if at(nb) {
                found = Some((nb, dir));
                break;
            }
        }
        let Some((next, dir)) = found else {
            // Isolated node: its own one-point loop.
            return Ok(path);
        };
        if next == start && path.len() > 1 {
            break;
        }
        path.push(next);
        // Re-aim the backtrack at the previous node.
        back = (dir + 4) % 8;
        cur = next;
        if path.len() > 4 * grid.len() {
            return Err(Error::Admissible("boundary trace failed to close".into()));
        }
    }
    Ok(path)
}

/// The homotopy class carried by a 3-set decomposition: windings of an
/// admissible map along the supplied loops, or along the traced boundary of
/// the union when none are given.
pub fn class_of_decomposition(
    config: &SetConfig,
    mb: &MarkedBoundary,
    loops: Option<Vec<Vec<(usize, usize)>>>,
) -> Result<HomotopyClass> {
    if config.n() != 3 {
        return Err(Error::Admissible(format!(
            "decomposition classes need exactly 3 sets, got {}",
            config.n()
        )));
    }
    let grid = config.grid();
    if let Some(idx) = (0..grid.len())
        .find(|&i| config.mask(0)[i] && config.mask(1)[i] && config.mask(2)[i])
    {
        let q = grid.node(idx % grid.nx, idx / grid.nx);
        return Err(Error::Admissible(format!(
            "triple intersection is nonempty near ({:.6}, {:.6})",
            q.x, q.y
        )));
    }
    let loops = match loops {
        Some(l) => l,
        None => {
            let union: Vec<bool> = (0..grid.len())
                .map(|i| config.mask(0)[i] || config.mask(1)[i] || config.mask(2)[i])
                .collect();
            vec![trace_boundary_loop(grid, &union)?]
        }
    };
    let phi = initial_admissible_map(config, mb)?;
    let center = mb.domain().inner_center();
    let windings = loops
        .par_iter()
        .map(|l| winding_number(&phi, l, center))
        .collect::<Result<Vec<i64>>>()?;
    Ok(HomotopyClass { loops, windings })
}
