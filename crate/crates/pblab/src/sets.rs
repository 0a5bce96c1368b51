//! Tuples of rasterized compact sets X_1, ..., X_N on a grid manifold.
//!
//! Masks follow an outer cell-meets convention: a node belongs to a set when
//! the h-cell around it comes within the cell circumradius of the shape, so
//! masks over-approximate the sets they discretize and shrink onto them as
//! the grid refines. The tuple must intersect cyclically — non-neighbouring
//! sets stay disjoint — and every operation that rebuilds masks re-checks
//! that.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dist::distance_field;
use crate::error::Error;
use crate::fields::GridManifold;
use crate::geometry::{segment_dist, v, Vec2};
use crate::Result;

/// Scalar function backing a sublevel shape.
pub type LevelFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

/// Geometric primitive from which set masks are rasterized.
#[derive(Clone)]
pub enum SetShape {
    Disc {
        center: Vec2,
        radius: f64,
    },
    Rect {
        lo: Vec2,
        hi: Vec2,
    },
    /// Capsule chain: everything within `half_width` of the polyline.
    Polyline {
        points: Vec<Vec2>,
        half_width: f64,
    },
    /// Everything within `half_width` of the circle arc swept
    /// counter-clockwise from `theta0` to `theta1`.
    CircleArc {
        center: Vec2,
        radius: f64,
        theta0: f64,
        theta1: f64,
        half_width: f64,
    },
    /// Closure of `{ q : f(q) <= level }`. Rasterized by sampling each cell
    /// on a 4 x 4 lattice rather than by distance, so features thinner than
    /// a third of a cell can be missed.
    Sublevel {
        f: LevelFn,
        level: f64,
    },
}

impl std::fmt::Debug for SetShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SetShape::Disc { center, radius } => {
                write!(f, "Disc({center:?}, r={radius})")
            }
            SetShape::Rect { lo, hi } => write!(f, "Rect({lo:?}..{hi:?})"),
            SetShape::Polyline { points, half_width } => {
                write!(f, "Polyline({} pts, w={half_width})", points.len())
            }
            SetShape::CircleArc { center, radius, theta0, theta1, half_width } => write!(
                f,
                "CircleArc({center:?}, r={radius}, {theta0}..{theta1}, w={half_width})"
            ),
            SetShape::Sublevel { level, .. } => write!(f, "Sublevel(level={level})"),
        }
    }
}

impl SetShape {
    fn check(&self) -> Result<()> {
        let ok = match self {
            SetShape::Disc { radius, .. } => *radius >= 0.0,
            SetShape::Rect { lo, hi } => hi.x >= lo.x && hi.y >= lo.y,
            SetShape::Polyline { points, half_width } => {
                !points.is_empty() && *half_width >= 0.0
            }
            SetShape::CircleArc { radius, theta0, theta1, half_width, .. } => {
                *radius > 0.0 && theta1 > theta0 && *half_width >= 0.0
            }
            SetShape::Sublevel { level, .. } => level.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Sets(format!("degenerate shape {self:?}")))
        }
    }

    /// Euclidean distance from `q` to the shape; zero inside. Infinite for
    /// sublevel shapes, which carry no metric and are handled by sampling.
    pub fn distance(&self, q: Vec2) -> f64 {
        match self {
            SetShape::Disc { center, radius } => (q.dist(*center) - radius).max(0.0),
            SetShape::Rect { lo, hi } => {
                let dx = (lo.x - q.x).max(0.0).max(q.x - hi.x);
                let dy = (lo.y - q.y).max(0.0).max(q.y - hi.y);
                v(dx, dy).norm()
            }
            SetShape::Polyline { points, half_width } => {
                let spine = if points.len() == 1 {
                    q.dist(points[0])
                } else {
                    points
                        .windows(2)
                        .map(|w| segment_dist(q, w[0], w[1]))
                        .fold(f64::INFINITY, f64::min)
                };
                (spine - half_width).max(0.0)
            }
            SetShape::CircleArc { center, radius, theta0, theta1, half_width } => {
                let d = q - *center;
                let tau = std::f64::consts::TAU;
                let spine = if theta1 - theta0 >= tau {
                    (d.norm() - radius).abs()
                } else {
                    let th = (d.angle() - theta0).rem_euclid(tau);
                    if th <= theta1 - theta0 {
                        (d.norm() - radius).abs()
                    } else {
                        let e0 = *center + Vec2::from_angle(*theta0) * *radius;
                        let e1 = *center + Vec2::from_angle(*theta1) * *radius;
                        q.dist(e0).min(q.dist(e1))
                    }
                };
                (spine - half_width).max(0.0)
            }
            SetShape::Sublevel { .. } => f64::INFINITY,
        }
    }

    /// Does the h-cell centred at `q` meet the shape? Metric shapes test the
    /// cell circumradius against the exact distance (an over-approximation
    /// monotone under shape inclusion); sublevel shapes sample the cell.
    fn meets_cell(&self, q: Vec2, h: f64, translates: &[Vec2]) -> bool {
        match self {
            SetShape::Sublevel { f, level } => {
                for a in 0..4 {
                    for b in 0..4 {
                        let p = q + v(h * (a as f64 / 3.0 - 0.5), h * (b as f64 / 3.0 - 0.5));
                        if f(p) <= *level {
                            return true;
                        }
                    }
                }
                false
            }
            _ => {
                let pad = h * std::f64::consts::FRAC_1_SQRT_2;
                translates.iter().any(|&t| self.distance(q + t) <= pad)
            }
        }
    }
}

fn torus_translates(grid: &GridManifold) -> Vec<Vec2> {
    if !grid.is_wrapping() {
        return vec![Vec2::ZERO];
    }
    let (lx, ly) = (grid.nx as f64 * grid.h, grid.ny as f64 * grid.h);
    let mut out = Vec::with_capacity(9);
    for sy in [-1.0, 0.0, 1.0] {
        for sx in [-1.0, 0.0, 1.0] {
            out.push(v(sx * lx, sy * ly));
        }
    }
    out
}

/// Rasterizes a union of shapes into a node mask, with no tuple validation.
pub fn rasterize_mask(grid: &GridManifold, shapes: &[SetShape]) -> Result<Vec<bool>> {
    for s in shapes {
        s.check()?;
    }
    let translates = torus_translates(grid);
    Ok((0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let q = grid.node(idx % grid.nx, idx / grid.nx);
            shapes.iter().any(|s| s.meets_cell(q, grid.h, &translates))
        })
        .collect())
}

/// A cyclically intersecting tuple of node masks over one grid.
#[derive(Debug, Clone)]
pub struct SetConfig {
    grid: Arc<GridManifold>,
    masks: Vec<Vec<bool>>,
}

impl SetConfig {
    /// Wraps pre-built masks, enforcing the cyclic-intersection invariant.
    pub fn from_masks(grid: Arc<GridManifold>, masks: Vec<Vec<bool>>) -> Result<SetConfig> {
        let cfg = SetConfig { grid, masks };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rasterizes one shape list per set and validates the tuple.
    pub fn rasterize(grid: Arc<GridManifold>, sets: &[Vec<SetShape>]) -> Result<SetConfig> {
        let masks = sets
            .iter()
            .map(|shapes| rasterize_mask(&grid, shapes))
            .collect::<Result<Vec<_>>>()?;
        SetConfig::from_masks(grid, masks)
    }

    pub fn n(&self) -> usize {
        self.masks.len()
    }

    pub fn grid(&self) -> &Arc<GridManifold> {
        &self.grid
    }

    pub fn mask(&self, i: usize) -> &[bool] {
        &self.masks[i]
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    /// Distance from every node to set `i`.
    pub fn distance_to(&self, i: usize) -> Vec<f64> {
        distance_field(
            &self.masks[i],
            self.grid.nx,
            self.grid.ny,
            self.grid.h,
            self.grid.is_wrapping(),
        )
    }

    /// Smallest node-to-set gap between sets `i` and `j`; zero when they meet.
    pub fn separation(&self, i: usize, j: usize) -> f64 {
        let di = self.distance_to(i);
        self.masks[j]
            .iter()
            .zip(&di)
            .filter_map(|(&m, &d)| m.then_some(d))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masks.len();
        if n < 3 {
            return Err(Error::Sets(format!("a tuple needs at least 3 sets, got {n}")));
        }
        for (k, m) in self.masks.iter().enumerate() {
            if m.len() != self.grid.len() {
                return Err(Error::Sets(format!(
                    "mask {} has {} nodes but the grid has {}",
                    k + 1,
                    m.len(),
                    self.grid.len()
                )));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::Sets(format!("set {} is empty", k + 1)));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let gap = j - i;
                if gap == 1 || gap == n - 1 {
                    continue;
                }
                if let Some(idx) = self.masks[i]
                    .iter()
                    .zip(&self.masks[j])
                    .position(|(&a, &b)| a && b)
                {
                    let q = self.grid.node(idx % self.grid.nx, idx / self.grid.nx);
                    return Err(Error::Sets(format!(
                        "sets {} and {} are not cyclic neighbours but intersect near \
                         ({:.6}, {:.6})",
                        i + 1,
                        j + 1,
                        q.x,
                        q.y
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replaces the last two sets by their union, shortening the tuple.
    pub fn merge_last_two(&self) -> Result<SetConfig> {
        let n = self.n();
        if n < 4 {
            return Err(Error::Sets(format!(
                "merging the last two sets needs at least 4, got {n}"
            )));
        }
        let mut masks = self.masks.clone();
        let last = masks.pop().expect("n >= 4");
        let tail = masks.last_mut().expect("n >= 4");
        for (t, l) in tail.iter_mut().zip(&last) {
            *t = *t || *l;
        }
        SetConfig::from_masks(self.grid.clone(), masks)
    }

    /// Splits off a neighbourhood `k` of X_1 ∩ X_N as a new last set,
    /// removing it from X_1 and X_N: (X_1∖K, X_2, ..., X_N∖K, K).
    pub fn split_by_neighborhood(&self, k: &[bool]) -> Result<SetConfig> {
        let n = self.n();
        if k.len() != self.grid.len() {
            return Err(Error::Sets(format!(
                "neighbourhood mask has {} nodes but the grid has {}",
                k.len(),
                self.grid.len()
            )));
        }
        for idx in 0..k.len() {
            if self.masks[0][idx] && self.masks[n - 1][idx] && !k[idx] {
                let q = self.grid.node(idx % self.grid.nx, idx / self.grid.nx);
                return Err(Error::Sets(format!(
                    "neighbourhood misses the X_1 ∩ X_{n} node at ({:.6}, {:.6})",
                    q.x, q.y
                )));
            }
        }
        for (m, mask) in self.masks.iter().enumerate().take(n - 1).skip(1) {
            if let Some(idx) = k.iter().zip(mask).position(|(&a, &b)| a && b) {
                let q = self.grid.node(idx % self.grid.nx, idx / self.grid.nx);
                return Err(Error::Sets(format!(
                    "neighbourhood meets set {} near ({:.6}, {:.6})",
                    m + 1,
                    q.x,
                    q.y
                )));
            }
        }
        let cut = |mask: &[bool]| -> Vec<bool> {
            mask.iter().zip(k).map(|(&m, &kk)| m && !kk).collect()
        };
        let mut masks = Vec::with_capacity(n + 1);
        masks.push(cut(&self.masks[0]));
        masks.extend(self.masks[1..n - 1].iter().cloned());
        masks.push(cut(&self.masks[n - 1]));
        masks.push(k.to_vec());
        SetConfig::from_masks(self.grid.clone(), masks)
    }
}

/// Dilation of a node mask by Euclidean (torus: quotient) distance `r`.
pub fn neighborhood(grid: &GridManifold, mask: &[bool], r: f64) -> Result<Vec<bool>> {
    if !(r >= 0.0) {
        return Err(Error::Sets(format!("dilation radius {r} is negative")));
    }
    if mask.len() != grid.len() {
        return Err(Error::Sets(format!(
            "mask has {} nodes but the grid has {}",
            mask.len(),
            grid.len()
        )));
    }
    if r == 0.0 {
        return Ok(mask.to_vec());
    }
    let d = distance_field(mask, grid.nx, grid.ny, grid.h, grid.is_wrapping());
    Ok(d.iter().map(|&di| di <= r * (1.0 + 1e-12)).collect())
}

/// Symmetric max-min node distance between two nonempty masks.
pub fn hausdorff_distance(grid: &GridManifold, a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(Error::Sets("mask size does not match the grid".into()));
    }
    if !a.iter().any(|&x| x) || !b.iter().any(|&x| x) {
        return Err(Error::Sets("Hausdorff distance of an empty mask".into()));
    }
    let da = distance_field(a, grid.nx, grid.ny, grid.h, grid.is_wrapping());
    let db = distance_field(b, grid.nx, grid.ny, grid.h, grid.is_wrapping());
    let one_way = |m: &[bool], d: &[f64]| {
        m.iter()
            .zip(d)
            .filter_map(|(&inside, &dd)| inside.then_some(dd))
            .fold(0.0f64, f64::max)
    };
    Ok(one_way(a, &db).max(one_way(b, &da)))
}

/// Writes a mask as a plain (P1) portable bitmap, top row first.
pub fn write_pbm(grid: &GridManifold, mask: &[bool], mut w: impl std::io::Write) -> Result<()> {
    if mask.len() != grid.len() {
        return Err(Error::Sets("mask size does not match the grid".into()));
    }
    writeln!(w, "P1")?;
    writeln!(w, "{} {}", grid.nx, grid.ny)?;
    for j in (0..grid.ny).rev() {
        let row: Vec<&str> = (0..grid.nx)
            .map(|i| if mask[grid.idx(i, j)] { "1" } else { "0" })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(x: f64, y: f64, r: f64) -> Vec<SetShape> {
        vec![SetShape::Disc { center: v(x, y), radius: r }]
    }

    fn popcount(m: &[bool]) -> usize {
        m.iter().filter(|&&b| b).count()
    }

    fn node_dist(grid: &GridManifold, a: usize, b: usize) -> f64 {
        let pa = grid.node(a % grid.nx, a / grid.nx);
        let pb = grid.node(b % grid.nx, b / grid.nx);
        torus_translates(grid)
            .iter()
            .map(|&t| pa.dist(pb + t))
            .fold(f64::INFINITY, f64::min)
    }

    // Independent O(n^2) references the distance-transform versions must match.
    fn brute_dilate(grid: &GridManifold, mask: &[bool], r: f64) -> Vec<bool> {
        (0..grid.len())
            .map(|i| {
                (0..grid.len())
                    .any(|j| mask[j] && node_dist(grid, i, j) <= r * (1.0 + 1e-12))
            })
            .collect()
    }

    fn brute_hausdorff(grid: &GridManifold, a: &[bool], b: &[bool]) -> f64 {
        let min_to = |i: usize, m: &[bool]| {
            (0..grid.len())
                .filter(|&j| m[j])
                .map(|j| node_dist(grid, i, j))
                .fold(f64::INFINITY, f64::min)
        };
        let one = (0..grid.len())
            .filter(|&i| a[i])
            .map(|i| min_to(i, b))
            .fold(0.0f64, f64::max);
        let two = (0..grid.len())
            .filter(|&i| b[i])
            .map(|i| min_to(i, a))
            .fold(0.0f64, f64::max);
        one.max(two)
    }

    #[test]
    fn disjoint_discs_on_torus_make_a_valid_triple() {
        let g = GridManifold::torus(0.0, 0.0, 1.0, 1.0, 40).unwrap();
        let cfg = SetConfig::rasterize(
            g,
            &[disc(0.2, 0.2, 0.08), disc(0.65, 0.25, 0.08), disc(0.45, 0.72, 0.08)],
        )
        .unwrap();
        assert_eq!(cfg.n(), 3);
        for i in 0..3 {
            assert!(popcount(cfg.mask(i)) > 0);
        }
        assert!(cfg.separation(0, 1) > 0.1);
    }

    #[test]
    fn rasterized_discs_wrap_around_the_torus_seam() {
        let g = GridManifold::torus(0.0, 0.0, 1.0, 1.0, 50).unwrap();
        let m = rasterize_mask(&g, &disc(0.03, 0.5, 0.1)).unwrap();
        // 0.96 is 0.07 away across the seam.
        assert!(m[g.idx(48, 25)]);
        // ... and 0.5 away through the middle.
        assert!(!m[g.idx(25, 25)]);
    }

    #[test]
    fn thickened_circle_arcs_make_a_valid_quadruple() {
        let g = GridManifold::plane_box(-1.5, -1.5, 1.5, 1.5, 61).unwrap();
        let quarter = std::f64::consts::FRAC_PI_2;
        let lap = 0.15;
        let arcs: Vec<Vec<SetShape>> = (0..4)
            .map(|k| {
                vec![SetShape::CircleArc {
                    center: Vec2::ZERO,
                    radius: 1.0,
                    theta0: k as f64 * quarter - lap,
                    theta1: (k + 1) as f64 * quarter + lap,
                    half_width: 0.05,
                }]
            })
            .collect();
        let cfg = SetConfig::rasterize(g, &arcs).unwrap();
        assert_eq!(cfg.n(), 4);
        // Consecutive arcs share their overlap ends.
        for k in 0..4 {
            assert_eq!(cfg.separation(k, (k + 1) % 4), 0.0);
        }
    }

    #[test]
    fn nonadjacent_overlap_names_the_pair() {
        let g = GridManifold::plane_box(-1.0, -1.0, 2.0, 2.0, 31).unwrap();
        let err = SetConfig::rasterize(
            g,
            &[
                disc(0.0, 0.0, 0.3),
                disc(1.5, 0.0, 0.1),
                disc(0.1, 0.0, 0.3),
                disc(0.0, 1.5, 0.1),
            ],
        )
        .unwrap_err();
        match err {
            Error::Sets(msg) => assert!(msg.contains("sets 1 and 3"), "{msg}"),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn dilation_matches_brute_force_and_the_21_node_disc() {
        let g = GridManifold::plane_box(0.0, 0.0, 1.0, 1.0, 21).unwrap();
        let mut seed = vec![false; g.len()];
        seed[g.idx(10, 10)] = true;
        let r = 2.5 * g.h;
        let d = neighborhood(&g, &seed, r).unwrap();
        assert_eq!(popcount(&d), 21);
        assert_eq!(d, brute_dilate(&g, &seed, r));

        let gt = GridManifold::torus(0.0, 0.0, 1.0, 1.0, 12).unwrap();
        let mut m = vec![false; gt.len()];
        m[gt.idx(0, 3)] = true;
        m[gt.idx(11, 9)] = true;
        for r in [0.9 * gt.h, 1.8 * gt.h, 3.3 * gt.h] {
            assert_eq!(neighborhood(&gt, &m, r).unwrap(), brute_dilate(&gt, &m, r));
        }
    }

    #[test]
    fn dilation_is_monotone_and_identity_at_zero() {
        let g = GridManifold::plane_box(0.0, 0.0, 1.0, 1.0, 17).unwrap();
        let mask: Vec<bool> = (0..g.len()).map(|i| i % 37 == 0 || i % 53 == 5).collect();
        assert_eq!(neighborhood(&g, &mask, 0.0).unwrap(), mask);
        let mut prev = mask.clone();
        for r in [0.4, 1.1, 2.0, 3.7] {
            let next = neighborhood(&g, &mask, r * g.h).unwrap();
            for (p, q) in prev.iter().zip(&next) {
                assert!(!p | q, "dilation lost a node as r grew");
            }
            prev = next;
        }
    }

    #[test]
    fn hausdorff_matches_brute_force() {
        let g = GridManifold::plane_box(0.0, 0.0, 1.6, 1.2, 17).unwrap();
        let a: Vec<bool> = (0..g.len()).map(|i| i % 29 == 3).collect();
        let b: Vec<bool> = (0..g.len()).map(|i| i % 31 == 7).collect();
        assert_eq!(hausdorff_distance(&g, &a, &a).unwrap(), 0.0);
        let d = hausdorff_distance(&g, &a, &b).unwrap();
        assert!((d - brute_hausdorff(&g, &a, &b)).abs() < 1e-9);

        let gt = GridManifold::torus(0.0, 0.0, 1.0, 1.0, 13).unwrap();
        let mut p = vec![false; gt.len()];
        let mut q = vec![false; gt.len()];
        p[gt.idx(1, 1)] = true;
        q[gt.idx(12, 12)] = true;
        let d = hausdorff_distance(&gt, &p, &q).unwrap();
        // Two nodes straddling the corner seam.
        assert!((d - gt.h * 8.0f64.sqrt()).abs() < 1e-12);
        assert!((d - brute_hausdorff(&gt, &p, &q)).abs() < 1e-12);
    }

    #[test]
    fn dilation_stays_hausdorff_close() {
        let g = GridManifold::plane_box(0.0, 0.0, 1.0, 1.0, 25).unwrap();
        let m = rasterize_mask(&g, &disc(0.5, 0.5, 0.2)).unwrap();
        let r = 3.2 * g.h;
        let big = neighborhood(&g, &m, r).unwrap();
        let d = hausdorff_distance(&g, &m, &big).unwrap();
        assert!(d <= r + g.h * 2.0f64.sqrt());
    }

    #[test]
    fn empty_masks_are_rejected() {
        let g = GridManifold::plane_box(0.0, 0.0, 1.0, 1.0, 9).unwrap();
        let empty = vec![false; g.len()];
        let full = vec![true; g.len()];
        assert!(matches!(
            hausdorff_distance(&g, &empty, &full),
            Err(Error::Sets(_))
        ));
        let err =
            SetConfig::from_masks(g, vec![full.clone(), empty, full]).unwrap_err();
        match err {
            Error::Sets(msg) => assert!(msg.contains("set 2 is empty"), "{msg}"),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn merge_makes_the_union_and_requires_four() {
        let g = GridManifold::plane_box(-1.5, -1.5, 1.5, 1.5, 61).unwrap();
        let quarter = std::f64::consts::FRAC_PI_2;
        let arcs: Vec<Vec<SetShape>> = (0..4)
            .map(|k| {
                vec![SetShape::CircleArc {
                    center: Vec2::ZERO,
                    radius: 1.0,
                    theta0: k as f64 * quarter - 0.12,
                    theta1: (k + 1) as f64 * quarter + 0.12,
                    half_width: 0.05,
                }]
            })
            .collect();
        let four = SetConfig::rasterize(g, &arcs).unwrap();
        let three = four.merge_last_two().unwrap();
        assert_eq!(three.n(), 3);
        for idx in 0..three.grid().len() {
            assert_eq!(
                three.mask(2)[idx],
                four.mask(2)[idx] || four.mask(3)[idx]
            );
        }
        assert!(matches!(three.merge_last_two(), Err(Error::Sets(_))));
    }

    #[test]
    fn merging_a_ring_of_discs_stays_valid() {
        // Five consecutive-overlapping discs around a circle; merging the
        // last two only changes adjacency at the merged index.
        let g = GridManifold::plane_box(-1.5, -1.5, 1.5, 1.5, 41).unwrap();
        let sets: Vec<Vec<SetShape>> = (0..5)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 5.0;
                disc(th.cos(), th.sin(), 0.62)
            })
            .collect();
        let five = SetConfig::rasterize(g, &sets).unwrap();
        let four = five.merge_last_two().unwrap();
        assert_eq!(four.n(), 4);
    }

    #[test]
    fn split_quadruples_a_triple_and_recovers_supersets() {
        let g = GridManifold::plane_box(-1.0, -1.0, 2.0, 2.0, 61).unwrap();
        let triple = SetConfig::rasterize(
            g.clone(),
            &[disc(0.0, 0.0, 0.35), disc(1.6, 1.6, 0.2), disc(0.45, 0.0, 0.35)],
        )
        .unwrap();
        let inter: Vec<bool> = triple
            .mask(0)
            .iter()
            .zip(triple.mask(2))
            .map(|(&a, &b)| a && b)
            .collect();
        assert!(popcount(&inter) > 0);
        let k = neighborhood(&g, &inter, 3.0 * g.h).unwrap();
        let quad = triple.split_by_neighborhood(&k).unwrap();
        assert_eq!(quad.n(), 4);
        // X_1∖K and X_3∖K really lost their intersection.
        for idx in 0..g.len() {
            assert!(!(quad.mask(0)[idx] && quad.mask(2)[idx]));
        }
        // Merging back and restoring K recovers supersets of the originals.
        let merged = quad.merge_last_two().unwrap();
        for idx in 0..g.len() {
            let with_k = |m: &[bool]| m[idx] || k[idx];
            assert!(with_k(merged.mask(0)) || !triple.mask(0)[idx]);
            assert!(with_k(merged.mask(2)) || !triple.mask(2)[idx]);
            assert_eq!(merged.mask(1)[idx], triple.mask(1)[idx]);
        }
    }

    #[test]
    fn split_rejects_bad_neighbourhoods() {
        let g = GridManifold::plane_box(-1.0, -1.0, 2.0, 2.0, 61).unwrap();
        let triple = SetConfig::rasterize(
            g.clone(),
            &[disc(0.0, 0.0, 0.35), disc(1.6, 1.6, 0.2), disc(0.45, 0.0, 0.35)],
        )
        .unwrap();
        // A neighbourhood grabbing X_2 is out, even when it does cover the
        // X_1 ∩ X_3 core.
        let inter: Vec<bool> = triple
            .mask(0)
            .iter()
            .zip(triple.mask(2))
            .map(|(&a, &b)| a && b)
            .collect();
        let k = neighborhood(&g, &inter, 3.0 * g.h).unwrap();
        let k2: Vec<bool> = k
            .iter()
            .zip(triple.mask(1))
            .map(|(&a, &b)| a || b)
            .collect();
        match triple.split_by_neighborhood(&k2).unwrap_err() {
            Error::Sets(msg) => assert!(msg.contains("meets set 2"), "{msg}"),
            other => panic!("wrong error {other:?}"),
        }
        // One that misses part of X_1 ∩ X_3 is out too.
        let nothing = vec![false; g.len()];
        match triple.split_by_neighborhood(&nothing).unwrap_err() {
            Error::Sets(msg) => assert!(msg.contains("misses"), "{msg}"),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn shrinking_neighbourhoods_converge_to_the_core() {
        let g = GridManifold::plane_box(-1.0, -1.0, 2.0, 2.0, 41).unwrap();
        let a = rasterize_mask(&g, &disc(0.0, 0.0, 0.35)).unwrap();
        let b = rasterize_mask(&g, &disc(0.45, 0.0, 0.35)).unwrap();
        let core: Vec<bool> = a.iter().zip(&b).map(|(&x, &y)| x && y).collect();
        let mut prev = f64::INFINITY;
        for r in [6.0, 4.0, 2.0, 0.0] {
            let k = neighborhood(&g, &core, r * g.h).unwrap();
            let d = hausdorff_distance(&g, &k, &core).unwrap();
            assert!((d - brute_hausdorff(&g, &k, &core)).abs() < 1e-9);
            assert!(d <= prev + 1e-12, "distance grew as the radius shrank");
            prev = d;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn rasterization_is_monotone_for_nested_shapes() {
        let g = GridManifold::plane_box(-1.0, -1.0, 1.0, 1.0, 33).unwrap();
        let small = rasterize_mask(&g, &disc(0.1, 0.0, 0.2)).unwrap();
        let mid = rasterize_mask(&g, &disc(0.1, 0.0, 0.45)).unwrap();
        let box_over = rasterize_mask(
            &g,
            &[SetShape::Rect { lo: v(-0.4, -0.5), hi: v(0.6, 0.5) }],
        )
        .unwrap();
        for idx in 0..g.len() {
            assert!(!small[idx] | mid[idx]);
            // The disc of radius 0.45 around (0.1, 0) sits inside the box.
            assert!(!mid[idx] | box_over[idx]);
        }
    }

    #[test]
    fn polyline_and_sublevel_shapes_rasterize_sanely() {
        let g = GridManifold::plane_box(-1.0, -1.0, 1.0, 1.0, 41).unwrap();
        let cap = rasterize_mask(
            &g,
            &[SetShape::Polyline {
                points: vec![v(-0.5, 0.0), v(0.5, 0.0)],
                half_width: 0.1,
            }],
        )
        .unwrap();
        assert!(cap[g.idx(20, 20)]);
        assert!(!cap[g.idx(20, 35)]);

        let f: LevelFn = Arc::new(|q: Vec2| q.norm_sq());
        let sub = rasterize_mask(&g, &[SetShape::Sublevel { f, level: 0.25 }]).unwrap();
        let padded = rasterize_mask(&g, &disc(0.0, 0.0, 0.5)).unwrap();
        for idx in 0..g.len() {
            // Sampled sublevel cells genuinely meet the disc, so the padded
            // metric mask covers them.
            assert!(!sub[idx] | padded[idx]);
            let q = g.node(idx % g.nx, idx / g.nx);
            if q.norm() <= 0.5 - g.h {
                assert!(sub[idx]);
            }
        }
    }

    #[test]
    fn circle_arc_distance_is_exact() {
        let arc = SetShape::CircleArc {
            center: Vec2::ZERO,
            radius: 2.0,
            theta0: 0.0,
            theta1: std::f64::consts::FRAC_PI_2,
            half_width: 0.0,
        };
        // Radially off the mid-arc.
        assert!((arc.distance(v(0.0, 3.0)) - 1.0).abs() < 1e-12);
        assert!((arc.distance(v(0.5, 0.0)) - 1.5).abs() < 1e-12);
        // In the missing sector the endpoints take over.
        assert!((arc.distance(v(0.0, -2.0)) - 8.0f64.sqrt()).abs() < 1e-12);
        assert!((arc.distance(v(-2.0, -2.0)) - 20.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pbm_export_writes_top_row_first() {
        let g = GridManifold::plane_box(0.0, 0.0, 1.0, 1.0, 5).unwrap();
        let mut mask = vec![false; g.len()];
        mask[g.idx(0, 4)] = true;
        mask[g.idx(3, 0)] = true;
        let mut out = Vec::new();
        write_pbm(&g, &mask, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P1");
        assert_eq!(lines[1], "5 5");
        assert_eq!(lines[2], "1 0 0 0 0");
        assert_eq!(lines[6], "0 0 0 1 0");
    }
}
