//! Hamiltonian flow of a grid function and chord detection between sets.
//!
//! The flow of `G` follows `(dG/dy, -dG/dx)`, matching the standard
//! symplectic form; the gradient is taken by central differences at the
//! nodes and interpolated bilinearly in between. Integration is a classical
//! fourth-order one-step scheme with fixed `dt`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::fields::{GridManifold, ScalarField};
use crate::geometry::{v, Vec2};
use crate::Result;

/// Node-sampled velocity field of a Hamiltonian, ready to interpolate.
struct FlowField {
    grid: Arc<GridManifold>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    lo: Vec2,
    hi: Vec2,
}

impl FlowField {
    fn new(g: &ScalarField) -> FlowField {
        let grid = g.grid().clone();
        let gx = grid.grad_x(g.values());
        let gy = grid.grad_y(g.values());
        let (lo, hi) = grid.extent();
        FlowField { grid, gx, gy, lo, hi }
    }

    fn in_domain(&self, q: Vec2) -> bool {
        self.grid.is_wrapping()
            || (q.x >= self.lo.x && q.x <= self.hi.x && q.y >= self.lo.y && q.y <= self.hi.y)
    }

    fn velocity(&self, q: Vec2) -> Vec2 {
        let (idx, w) = self.grid.bilinear(q);
        let mut dx = 0.0;
        let mut dy = 0.0;
        for k in 0..4 {
            dx += w[k] * self.gx[idx[k]];
            dy += w[k] * self.gy[idx[k]];
        }
        v(dy, -dx)
    }

    fn rk4_step(&self, x: Vec2, dt: f64) -> Vec2 {
        let k1 = self.velocity(x);
        let k2 = self.velocity(x + k1 * (dt / 2.0));
        let k3 = self.velocity(x + k2 * (dt / 2.0));
        let k4 = self.velocity(x + k3 * dt);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    /// Index of the node whose cell contains `q`, by the same node-centred
    /// rounding the rasterizer uses.
    fn cell_of(&self, q: Vec2) -> usize {
        let rel = (q - self.lo) / self.grid.h;
        let (i, j) = if self.grid.is_wrapping() {
            (
                (rel.x.round() as isize).rem_euclid(self.grid.nx as isize) as usize,
                (rel.y.round() as isize).rem_euclid(self.grid.ny as isize) as usize,
            )
        } else {
            (
                (rel.x.round().max(0.0) as usize).min(self.grid.nx - 1),
                (rel.y.round().max(0.0) as usize).min(self.grid.ny - 1),
            )
        };
        self.grid.idx(i, j)
    }
}

/// A flow path sampled at every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<Vec2>,
    pub dt: f64,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        (self.points.len() - 1) as f64 * self.dt
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().expect("a trajectory holds its start")
    }

    /// Plain `t,x,y` rows for plotting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,x,y")?;
        for (k, p) in self.points.iter().enumerate() {
            writeln!(out, "{},{},{}", k as f64 * self.dt, p.x, p.y)?;
        }
        Ok(())
    }
}

/// Integrates the flow of `g` from `x0` for `round(t / dt)` steps of size
/// exactly `dt`. On a plane box the trajectory must stay inside; on the
/// torus it cannot leave.
pub fn hamiltonian_flow(g: &ScalarField, x0: Vec2, t: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Dynamics(format!("step {dt} must be positive")));
    }
    if !(t >= 0.0) {
        return Err(Error::Dynamics(format!("time {t} must not be negative")));
    }
    let field = FlowField::new(g);
    if !field.in_domain(x0) {
        return Err(Error::Dynamics(format!(
            "start ({}, {}) lies outside the box",
            x0.x, x0.y
        )));
    }
    let steps = (t / dt).round() as usize;
    let mut points = Vec::with_capacity(steps + 1);
    points.push(x0);
    let mut x = x0;
    for k in 0..steps {
        x = field.rk4_step(x, dt);
        if !field.in_domain(x) {
            return Err(Error::Dynamics(format!(
                "trajectory left the box at time {:.6}",
                (k + 1) as f64 * dt
            )));
        }
        points.push(x);
    }
    Ok(Trajectory { points, dt })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChordDirection {
    AToB,
    BToA,
}

/// One observed flow segment between the two sets, in forward time.
#[derive(Debug, Clone, Serialize)]
pub struct Chord {
    pub start: Vec2,
    pub end: Vec2,
    /// Step count times `dt`.
    pub time: f64,
    pub direction: ChordDirection,
}

/// Everything `find_chords` observed; an empty report is a valid outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ChordReport {
    pub chords: Vec<Chord>,
    pub minimal_time: Option<f64>,
    pub p: f64,
    pub dt: f64,
    pub seeds_a: usize,
    pub seeds_b: usize,
}

impl ChordReport {
    pub fn is_empty(&self) -> bool {
        self.chords.is_empty()
    }
}

/// Flows every `stride`-th node of each set both forward and backward for
/// time `p`, recording the first entry into the other set. Backward entries
/// are reported as forward-time chords of the opposite direction. Seeds
/// whose trajectories leave a plane box are dropped silently.
pub fn find_chords(
    g: &ScalarField,
    a: &[bool],
    b: &[bool],
    p: f64,
    dt: f64,
    stride: usize,
) -> Result<ChordReport> {
    let grid = g.grid().clone();
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(Error::Dynamics(format!(
            "masks with {} and {} nodes on a grid of {}",
            a.len(),
            b.len(),
            grid.len()
        )));
    }
    if !(p > 0.0) {
        return Err(Error::Dynamics(format!("horizon {p} must be positive")));
    }
    if !(dt > 0.0) {
        return Err(Error::Dynamics(format!("step {dt} must be positive")));
    }
    if stride == 0 {
        return Err(Error::Dynamics("seed stride must be at least 1".into()));
    }
    if !a.iter().any(|&m| m) || !b.iter().any(|&m| m) {
        return Err(Error::Dynamics("both sets need at least one node".into()));
    }
    if a.iter().zip(b).any(|(&x, &y)| x && y) {
        return Err(Error::Dynamics("the sets overlap; chords need disjoint ends".into()));
    }

    let field = FlowField::new(g);
    let steps = (p / dt).ceil() as usize;
    let seeds_of = |mask: &[bool]| -> Vec<Vec2> {
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(idx, _)| grid.node(idx % grid.nx, idx / grid.nx))
            .step_by(stride)
            .collect()
    };
    let seeds_a = seeds_of(a);
    let seeds_b = seeds_of(b);

    // First entry of the (possibly time-reversed) flow into `target`.
    let first_entry = |seed: Vec2, target: &[bool], signed_dt: f64| -> Option<(Vec2, f64)> {
        let mut x = seed;
        for k in 1..=steps {
            x = field.rk4_step(x, signed_dt);
            if !field.in_domain(x) {
                return None;
            }
            if target[field.cell_of(x)] {
                return Some((x, k as f64 * dt));
            }
        }
        None
    };

    let mut chords: Vec<Chord> = Vec::new();
    let from_a: Vec<Vec<Chord>> = seeds_a
        .par_iter()
        .map(|&seed| {
            let mut found = Vec::new();
            if let Some((hit, time)) = first_entry(seed, b, dt) {
                found.push(Chord { start: seed, end: hit, time, direction: ChordDirection::AToB });
            }
            if let Some((hit, time)) = first_entry(seed, b, -dt) {
                found.push(Chord { start: hit, end: seed, time, direction: ChordDirection::BToA });
            }
            found
        })
        .collect();
    let from_b: Vec<Vec<Chord>> = seeds_b
        .par_iter()
        .map(|&seed| {
            let mut found = Vec::new();
            if let Some((hit, time)) = first_entry(seed, a, dt) {
                found.push(Chord { start: seed, end: hit, time, direction: ChordDirection::BToA });
            }
            if let Some((hit, time)) = first_entry(seed, a, -dt) {
                found.push(Chord { start: hit, end: seed, time, direction: ChordDirection::AToB });
            }
            found
        })
        .collect();
    for group in from_a.into_iter().chain(from_b) {
        chords.extend(group);
    }
    let minimal_time = chords.iter().map(|c| c.time).fold(None, |m: Option<f64>, t| {
        Some(m.map_or(t, |x| x.min(t)))
    });
    Ok(ChordReport {
        chords,
        minimal_time,
        p,
        dt,
        seeds_a: seeds_a.len(),
        seeds_b: seeds_b.len(),
    })
}

/// The sign conditions a Hamiltonian must satisfy before a chord experiment
/// says anything: nonpositive over the second set, at least 1 over the
/// core where the first and third sets meet.
#[derive(Debug, Clone, Serialize)]
pub struct SideConditions {
    pub max_on_second: f64,
    pub min_on_core: f64,
    pub ok: bool,
}

pub fn side_conditions(g: &ScalarField, second: &[bool], core: &[bool]) -> Result<SideConditions> {
    let grid = g.grid();
    if second.len() != grid.len() || core.len() != grid.len() {
        return Err(Error::Dynamics("mask sizes do not match the grid".into()));
    }
    if !core.iter().any(|&m| m) {
        return Err(Error::Dynamics(
            "the core is empty; the sign conditions say nothing".into(),
        ));
    }
    let mut max_on_second = f64::NEG_INFINITY;
    let mut min_on_core = f64::INFINITY;
    for idx in 0..grid.len() {
        if second[idx] {
            max_on_second = max_on_second.max(g.values()[idx]);
        }
        if core[idx] {
            min_on_core = min_on_core.min(g.values()[idx]);
        }
    }
    let ok = max_on_second <= 0.0 && min_on_core >= 1.0;
    Ok(SideConditions { max_on_second, min_on_core, ok })
}
