//! Minimax descent producing certified upper bounds for the bracket
//! invariants.
//!
//! The descent minimizes a smooth stand-in for the objective — a p-norm
//! ladder for `sup |{phi1, phi2}|`, log-sum-exp for the signed max — by
//! gradient steps on the node values, restoring feasibility with a
//! form-specific projection every few accepted steps. Every projection
//! output is re-verified and recorded as a candidate; the reported value is
//! the re-evaluated true objective of the best candidate, so nothing the
//! optimizer believes enters the certificate.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissible::{
    check_admissible, initial_admissible_map, winding_number, AdmissibilityReport, HomotopyClass,
    ARC_TOL,
};
use crate::dist::distance_field;
use crate::error::Error;
use crate::fields::{GridManifold, ScalarField, VectorMapField};
use crate::geometry::{v, MarkedBoundary, Vec2};
use crate::maps::{pseudoretract, PseudoRetract};
use crate::pipelines::{collapse_vertex, forget_point, power_transform, push_away};
use crate::profile::smoothstep3;
use crate::sets::SetConfig;
use crate::Result;

/// Which invariant an estimate reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantKind {
    /// Marked-domain form `Pb_N` over an N-tuple of sets.
    PbN,
    /// Circle-valued form `Pb_X(alpha)` for a homotopy class on one set.
    PbAlpha,
    /// Two-function form of the three-set invariant, already in the
    /// half-normalization `pb3 = Pb3 / 2`.
    Pb3,
    /// Four-set marked form labelled in the argument order whose cyclic
    /// shuffle makes it equal `Pb4`.
    Pb4,
    /// One-sided four-set variant: the signed max replaces the sup.
    Pb4Plus,
}

/// The scalar reduced from the bracket field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    /// `sup |B|` over the nodes, smoothed by the p-norm ladder.
    Sup,
    /// Signed `max B` over the nodes, smoothed by log-sum-exp.
    Max,
}

/// Why a ladder stage ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Relative improvement over the plateau window fell below tolerance.
    Plateau,
    /// The gradient vanished.
    Tolerance,
    MaxIterations,
    /// Backtracking hit the minimal step without a decrease.
    StepFloor,
}

/// One ladder stage of one descent run.
#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    /// 0 for the deterministic base run, then one per stochastic restart.
    pub restart: usize,
    pub exponent: f64,
    pub iterations: usize,
    pub accepted: usize,
    pub projections: usize,
    pub initial_objective: f64,
    /// Smoothed objective after the closing projection.
    pub final_objective: f64,
    /// True objective after the closing projection.
    pub final_true: f64,
    pub stop: StopReason,
}

/// Descent parameters; the defaults reproduce the standard ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SolveSchedule {
    /// Smoothing exponents, strictly increasing.
    pub exponents: Vec<f64>,
    /// Initial backtracking step per stage.
    pub step: f64,
    /// Feasibility projection every this many accepted steps.
    pub projection_cadence: usize,
    /// Iteration cap per ladder stage.
    pub max_iterations: usize,
    /// Relative improvement under which the stage plateaus.
    pub tolerance: f64,
    /// Accepted steps the plateau test looks back over.
    pub plateau_window: usize,
    /// Collar budget of the feasibility projection.
    pub eps: f64,
    /// Enables the stochastic restarts; without it runs are deterministic.
    pub seed: Option<u64>,
    pub restarts: usize,
}

impl Default for SolveSchedule {
    fn default() -> Self {
        SolveSchedule {
            exponents: vec![8.0, 32.0, 128.0],
            step: 0.5,
            projection_cadence: 25,
            max_iterations: 600,
            tolerance: 1e-6,
            plateau_window: 100,
            eps: 0.05,
            seed: None,
            restarts: 0,
        }
    }
}

impl SolveSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.exponents.is_empty() {
            return Err(Error::Solver("the exponent ladder is empty".into()));
        }
        for w in self.exponents.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Solver(format!(
                    "exponent ladder must increase, found {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if !(self.exponents[0] > 1.0) {
            return Err(Error::Solver(format!(
                "smoothing exponent {} must exceed 1",
                self.exponents[0]
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::Solver(format!("step {} must be positive", self.step)));
        }
        if self.projection_cadence == 0 {
            return Err(Error::Solver("projection cadence must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Solver(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.plateau_window == 0 {
            return Err(Error::Solver("plateau window must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::Solver(format!(
                "projection collar eps = {} must lie in (0, 0.5)",
                self.eps
            )));
        }
        if self.restarts > 0 && self.seed.is_none() {
            return Err(Error::Solver(
                "stochastic restarts need a seed for reproducibility".into(),
            ));
        }
        Ok(())
    }
}

/// A certified estimate: `value` is the re-evaluated true objective of
/// `witness`, which passes the form's feasibility verification.
#[derive(Debug, Clone, Serialize)]
pub struct PbEstimate {
    pub kind: InvariantKind,
    /// Certified upper bound of the invariant.
    pub value: f64,
    /// The estimate in the classical normalization: half of `value` for a
    /// three-set marked run, equal to it for four sets and for forms already
    /// reported classically.
    pub lowercase_value: Option<f64>,
    pub objective: ObjectiveKind,
    pub n_sets: usize,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub wrapping: bool,
    /// Collar budget the feasibility projection used.
    pub eps: f64,
    /// Mask dilation radius of the admissibility checks.
    pub radius: f64,
    /// True objective of the first recorded candidate.
    pub seed_value: f64,
    pub warm_start: bool,
    /// Whether the warm-start map verified as-is and became candidate 0.
    pub warm_start_feasible: bool,
    pub candidates: usize,
    pub stages: Vec<StageSummary>,
    /// Set by the runner when the witness is persisted.
    pub witness_ref: Option<String>,
    #[serde(skip_serializing)]
    pub witness: VectorMapField,
}

// ---------------------------------------------------------------------------
// Objective, gradient.

fn bracket_of(grid: &GridManifold, u: &[f64], w: &[f64]) -> Vec<f64> {
    let ux = grid.grad_x(u);
    let uy = grid.grad_y(u);
    let wx = grid.grad_x(w);
    let wy = grid.grad_y(w);
    (0..u.len()).map(|k| ux[k] * wy[k] - uy[k] * wx[k]).collect()
}

fn true_objective(b: &[f64], obj: ObjectiveKind) -> f64 {
    match obj {
        ObjectiveKind::Sup => b.iter().fold(0.0f64, |m, &x| m.max(x.abs())),
        ObjectiveKind::Max => b.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)),
    }
}

fn smoothed_objective(b: &[f64], obj: ObjectiveKind, p: f64) -> f64 {
    match obj {
        ObjectiveKind::Sup => {
            // The p-norm, factored by the max so powers stay in [0, 1].
            let m = b.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            if m == 0.0 {
                return 0.0;
            }
            let s: f64 = b.iter().map(|&x| (x.abs() / m).powf(p)).sum();
            m * s.powf(1.0 / p)
        }
        ObjectiveKind::Max => {
            let m = b.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
            let s: f64 = b.iter().map(|&x| (p * (x - m)).exp()).sum();
            m + s.ln() / p
        }
    }
}

/// d(smoothed objective)/dB, nodewise.
fn objective_weights(b: &[f64], obj: ObjectiveKind, p: f64) -> Vec<f64> {
    match obj {
        ObjectiveKind::Sup => {
            let m = b.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            if m == 0.0 {
                return vec![0.0; b.len()];
            }
            let s: f64 = b.iter().map(|&x| (x.abs() / m).powf(p)).sum();
            let c = s.powf(1.0 / p - 1.0);
            b.iter()
                .map(|&x| c * (x.abs() / m).powf(p - 1.0) * x.signum())
                .collect()
        }
        ObjectiveKind::Max => {
            let m = b.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
            let mut w: Vec<f64> = b.iter().map(|&x| (p * (x - m)).exp()).collect();
            let s: f64 = w.iter().sum();
            for x in &mut w {
                *x /= s;
            }
            w
        }
    }
}

/// Smoothed objective and its gradient with respect to both value families;
/// frame nodes are pinned and report zero gradient. The bracket is bilinear
/// in the node values, so the chain rule through the difference stencils is
/// exact: dJ/du = Dx^T(g . Dy w) - Dy^T(g . Dx w) and symmetrically for w,
/// with g the nodewise objective weight.
fn objective_gradient(
    grid: &GridManifold,
    u: &[f64],
    w: &[f64],
    frame: &[bool],
    obj: ObjectiveKind,
    p: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let ux = grid.grad_x(u);
    let uy = grid.grad_y(u);
    let wx = grid.grad_x(w);
    let wy = grid.grad_y(w);
    let b: Vec<f64> = (0..u.len()).map(|k| ux[k] * wy[k] - uy[k] * wx[k]).collect();
    let j = smoothed_objective(&b, obj, p);
    let g = objective_weights(&b, obj, p);

    let gwy: Vec<f64> = (0..g.len()).map(|k| g[k] * wy[k]).collect();
    let gwx: Vec<f64> = (0..g.len()).map(|k| g[k] * wx[k]).collect();
    let gux: Vec<f64> = (0..g.len()).map(|k| g[k] * ux[k]).collect();
    let guy: Vec<f64> = (0..g.len()).map(|k| g[k] * uy[k]).collect();

    let ax = grid.grad_x_adjoint(&gwy);
    let ay = grid.grad_y_adjoint(&gwx);
    let bx = grid.grad_y_adjoint(&gux);
    let by = grid.grad_x_adjoint(&guy);

    let mut du: Vec<f64> = (0..g.len()).map(|k| ax[k] - ay[k]).collect();
    let mut dw: Vec<f64> = (0..g.len()).map(|k| bx[k] - by[k]).collect();
    for k in 0..du.len() {
        if frame[k] {
            du[k] = 0.0;
            dw[k] = 0.0;
        }
    }
    (j, du, dw)
}

/// Largest disagreement between the analytic gradient and central finite
/// differences of the smoothed objective, relative to the gradient's sup,
/// over a deterministic sample of interior node values.
pub fn gradient_check(
    phi: &VectorMapField,
    objective: ObjectiveKind,
    p: f64,
    samples: usize,
    fd_step: f64,
) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::Solver(format!("smoothing exponent {p} must exceed 1")));
    }
    if !(fd_step > 0.0) {
        return Err(Error::Solver(format!("difference step {fd_step} must be positive")));
    }
    if samples == 0 {
        return Err(Error::Solver("at least one sample is needed".into()));
    }
    let grid = phi.grid().clone();
    let frame: Vec<bool> = (0..grid.len())
        .map(|idx| grid.on_frame(idx % grid.nx, idx / grid.nx))
        .collect();
    let u = phi.phi1.values().to_vec();
    let w = phi.phi2.values().to_vec();
    let (_, du, dw) = objective_gradient(&grid, &u, &w, &frame, objective, p);
    let gmax = du
        .iter()
        .chain(dw.iter())
        .fold(0.0f64, |m, &x| m.max(x.abs()));
    if gmax == 0.0 {
        return Ok(0.0);
    }
    let free: Vec<usize> = (0..grid.len()).filter(|&k| !frame[k]).collect();
    let stride = (free.len() / samples).max(1);
    let mut worst = 0.0f64;
    let mut uu = u.clone();
    let mut ww = w.clone();
    for &idx in free.iter().step_by(stride).take(samples) {
        for comp in 0..2 {
            let (store, other, analytic): (&mut Vec<f64>, &Vec<f64>, f64) = if comp == 0 {
                (&mut uu, &w, du[idx])
            } else {
                (&mut ww, &u, dw[idx])
            };
            let x0 = store[idx];
            store[idx] = x0 + fd_step;
            let jp = if comp == 0 {
                smoothed_objective(&bracket_of(&grid, store, other), objective, p)
            } else {
                smoothed_objective(&bracket_of(&grid, other, store), objective, p)
            };
            store[idx] = x0 - fd_step;
            let jm = if comp == 0 {
                smoothed_objective(&bracket_of(&grid, store, other), objective, p)
            } else {
                smoothed_objective(&bracket_of(&grid, other, store), objective, p)
            };
            store[idx] = x0;
            let fd = (jp - jm) / (2.0 * fd_step);
            worst = worst.max((analytic - fd).abs() / gmax);
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Feasibility systems.

/// A constraint system the descent projects onto and verifies against.
trait Feasible: Sync {
    /// Returns a feasible map near `phi`; the result always passes `verify`.
    fn project(&self, phi: &VectorMapField) -> Result<VectorMapField>;
    /// Errors when `phi` is not a valid witness.
    fn verify(&self, phi: &VectorMapField) -> Result<()>;
}

fn admissibility_failure(report: &AdmissibilityReport) -> Error {
    for (k, ok) in report.set_ok.iter().enumerate() {
        if !ok {
            if let Some(o) = &report.worst[k] {
                return Error::Solver(format!(
                    "projected witness leaves arc {}: node ({}, {}) lands at ({:.6}, {:.6}), {:.3e} off",
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
    Error::Solver(format!(
        "projected witness breaks compact support: frame deviates by {:.3e}",
        report.cs_deviation
    ))
}

/// Per-node plan of the marked-domain arc re-imposition; weights are fixed by
/// the set geometry, only the values move.
#[derive(Debug, Clone, Copy)]
enum NodePlan {
    Free,
    /// Blend toward the nearest point of one arc with the given weight.
    One { arc: usize, w: f64 },
    /// Cyclically adjacent pair `(a, a+1)`, both collar weights positive.
    Pair { a: usize, w_a: f64, w_b: f64 },
}

struct MarkedFeasibility {
    config: SetConfig,
    mb: MarkedBoundary,
    retract: PseudoRetract,
    radius: f64,
    plans: Vec<NodePlan>,
    /// Boundary parameter of each mark and the length of each arc.
    params: Vec<f64>,
    arc_len: Vec<f64>,
    per: f64,
}

impl MarkedFeasibility {
    fn build(
        config: &SetConfig,
        mb: &MarkedBoundary,
        eps: f64,
        radius: f64,
    ) -> Result<MarkedFeasibility> {
        config.validate()?;
        let n = config.n();
        if mb.len() != n {
            return Err(Error::Solver(format!(
                "{n} sets but {} marked points",
                mb.len()
            )));
        }
        let grid = config.grid().clone();
        let h = grid.h;
        let retract = pseudoretract(mb.domain(), eps)?;
        // Matches the inclusive rounding of the mask dilation, so weight-one
        // nodes cover every dilated node the verifier will test.
        let pad = radius * (1.0 + 1e-12);
        let collar = 4.0 * h;
        let dists: Vec<Vec<f64>> = (0..n).map(|k| config.distance_to(k)).collect();
        let mut plans = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let mut act: Vec<(usize, f64)> = Vec::new();
            for (k, d) in dists.iter().enumerate() {
                let w = if d[idx] <= pad {
                    1.0
                } else {
                    smoothstep3(((pad + collar) - d[idx]) / collar)
                };
                if w > 0.0 {
                    act.push((k, w));
                }
            }
            act.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            let plan = match act.len() {
                0 => NodePlan::Free,
                1 => NodePlan::One {
                    arc: act[0].0,
                    w: act[0].1,
                },
                _ => {
                    if act.len() > 2 && act[2].1 >= 1.0 {
                        return Err(Error::Solver(format!(
                            "three dilated sets meet at node ({}, {})",
                            idx % grid.nx,
                            idx / grid.nx
                        )));
                    }
                    let (k1, w1) = act[0];
                    let (k2, w2) = act[1];
                    if (k1 + 1) % n == k2 {
                        NodePlan::Pair { a: k1, w_a: w1, w_b: w2 }
                    } else if (k2 + 1) % n == k1 {
                        NodePlan::Pair { a: k2, w_a: w2, w_b: w1 }
                    } else if w1 >= 1.0 && w2 >= 1.0 {
                        return Err(Error::Solver(format!(
                            "sets {} and {} are not cyclic neighbours yet their dilations meet at node ({}, {})",
                            k1 + 1,
                            k2 + 1,
                            idx % grid.nx,
                            idx / grid.nx
                        )));
                    } else {
                        // Collars of far-apart sets brush: keep the stronger
                        // pull, the weaker one was sub-exact anyway.
                        NodePlan::One { arc: k1, w: w1 }
                    }
                }
            };
            plans.push(plan);
        }
        let per = mb.domain().perimeter();
        let params: Vec<f64> = mb.fractions().iter().map(|f| f * per).collect();
        let arc_len: Vec<f64> = (0..n)
            .map(|k| (params[(k + 1) % n] - params[k]).rem_euclid(per))
            .collect();
        Ok(MarkedFeasibility {
            config: config.clone(),
            mb: mb.clone(),
            retract,
            radius,
            plans,
            params,
            arc_len,
            per,
        })
    }

    /// Arc-length offset of an on-arc point from the arc's start mark.
    fn offset_on(&self, arc: usize, p: Vec2) -> f64 {
        let t = self.mb.domain().project(p).0;
        (t - self.params[arc]).rem_euclid(self.per).min(self.arc_len[arc])
    }

    /// Idempotent pull of an on-arc point toward the arc's counterclockwise
    /// end: the offset is floored at `f` times the arc length.
    fn pull_to_far_end(&self, arc: usize, p: Vec2, f: f64) -> Vec2 {
        let l = self.offset_on(arc, p).max(f * self.arc_len[arc]);
        self.mb.domain().point_at(self.params[arc] + l)
    }

    /// Idempotent pull toward the arc's start mark: offset capped at
    /// `(1 - f)` times the arc length.
    fn pull_to_start(&self, arc: usize, p: Vec2, f: f64) -> Vec2 {
        let l = self.offset_on(arc, p).min((1.0 - f) * self.arc_len[arc]);
        self.mb.domain().point_at(self.params[arc] + l)
    }
}

impl Feasible for MarkedFeasibility {
    fn project(&self, phi: &VectorMapField) -> Result<VectorMapField> {
        let grid = phi.grid().clone();
        if grid.as_ref() != self.config.grid().as_ref() {
            return Err(Error::Grid("map and sets live on different grids".into()));
        }
        let r = phi.postcompose(|q| self.retract.map.apply(q))?;
        let n = self.mb.len();
        let vals: Vec<Vec2> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let q = v(r.phi1.values()[idx], r.phi2.values()[idx]);
                match self.plans[idx] {
                    NodePlan::Free => q,
                    NodePlan::One { arc, w } => {
                        let p = self.mb.arc_project(arc, q);
                        if w >= 1.0 {
                            p
                        } else {
                            q + (p - q) * w
                        }
                    }
                    NodePlan::Pair { a, w_a, w_b } => {
                        let b = (a + 1) % n;
                        // The stronger side owns the arc; the weaker side's
                        // weight pulls the value along it toward the shared
                        // mark, reaching it exactly when both weights are 1.
                        let t = if w_a >= w_b {
                            self.pull_to_far_end(a, self.mb.arc_project(a, q), w_b)
                        } else {
                            self.pull_to_start(b, self.mb.arc_project(b, q), w_a)
                        };
                        let w = w_a.max(w_b);
                        if w >= 1.0 {
                            t
                        } else {
                            q + (t - q) * w
                        }
                    }
                }
            })
            .collect();
        let out = VectorMapField {
            phi1: ScalarField::from_values(grid.clone(), vals.iter().map(|p| p.x).collect()),
            phi2: ScalarField::from_values(grid, vals.iter().map(|p| p.y).collect()),
            basepoint: r.basepoint,
        };
        self.verify(&out)?;
        Ok(out)
    }

    fn verify(&self, phi: &VectorMapField) -> Result<()> {
        let report = check_admissible(phi, &self.config, &self.mb, self.radius);
        if report.all_ok() {
            Ok(())
        } else {
            Err(admissibility_failure(&report))
        }
    }
}

struct ClassFeasibility {
    grid: Arc<GridManifold>,
    dilated: Vec<bool>,
    /// Collar weight per node: 1 on the dilated set, 0 beyond 4h further.
    w: Vec<f64>,
    loops: Vec<Vec<(usize, usize)>>,
    windings: Vec<i64>,
}

impl ClassFeasibility {
    fn build(
        grid: &Arc<GridManifold>,
        x_mask: &[bool],
        class: &HomotopyClass,
        radius: f64,
    ) -> Result<ClassFeasibility> {
        if x_mask.len() != grid.len() {
            return Err(Error::Grid(format!(
                "mask has {} nodes but the grid has {}",
                x_mask.len(),
                grid.len()
            )));
        }
        if !x_mask.iter().any(|&m| m) {
            return Err(Error::Solver("the constrained set is empty".into()));
        }
        if class.loops.is_empty() || class.loops.len() != class.windings.len() {
            return Err(Error::Solver(format!(
                "{} generator loops against {} windings",
                class.loops.len(),
                class.windings.len()
            )));
        }
        let d = distance_field(x_mask, grid.nx, grid.ny, grid.h, grid.is_wrapping());
        let pad = radius * (1.0 + 1e-12);
        let collar = 4.0 * grid.h;
        let mut dilated = vec![false; grid.len()];
        let mut w = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            if d[idx] <= pad {
                dilated[idx] = true;
                w[idx] = 1.0;
            } else {
                w[idx] = smoothstep3(((pad + collar) - d[idx]) / collar);
            }
        }
        for (li, l) in class.loops.iter().enumerate() {
            if l.len() < 2 {
                return Err(Error::Solver(format!("generator loop {li} has fewer than two nodes")));
            }
            for &(i, j) in l {
                if !dilated[grid.idx(i, j)] {
                    return Err(Error::Solver(format!(
                        "generator loop {li} leaves the dilated set at node ({i}, {j})"
                    )));
                }
            }
        }
        Ok(ClassFeasibility {
            grid: grid.clone(),
            dilated,
            w,
            loops: class.loops.clone(),
            windings: class.windings.clone(),
        })
    }
}

impl Feasible for ClassFeasibility {
    fn project(&self, phi: &VectorMapField) -> Result<VectorMapField> {
        if phi.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::Grid("map and mask live on different grids".into()));
        }
        let vals: Vec<Vec2> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut q = v(phi.phi1.values()[idx], phi.phi2.values()[idx]);
                let r = q.norm();
                if r > 1.0 {
                    q = q / r;
                }
                let w = self.w[idx];
                if w > 0.0 {
                    let r = q.norm();
                    if r < 1e-6 {
                        return Err(Error::Solver(format!(
                            "value vanished inside the circle collar at node ({}, {})",
                            idx % self.grid.nx,
                            idx / self.grid.nx
                        )));
                    }
                    let t = q / r;
                    q = if w >= 1.0 { t } else { q + (t - q) * w };
                }
                Ok(q)
            })
            .collect::<Result<Vec<Vec2>>>()?;
        let out = VectorMapField {
            phi1: ScalarField::from_values(self.grid.clone(), vals.iter().map(|p| p.x).collect()),
            phi2: ScalarField::from_values(self.grid.clone(), vals.iter().map(|p| p.y).collect()),
            basepoint: phi.basepoint,
        };
        self.verify(&out)?;
        Ok(out)
    }

    fn verify(&self, phi: &VectorMapField) -> Result<()> {
        let mut worst_circle = 0.0f64;
        let mut worst_ball = 0.0f64;
        for idx in 0..self.grid.len() {
            let r = v(phi.phi1.values()[idx], phi.phi2.values()[idx]).norm();
            if self.dilated[idx] {
                worst_circle = worst_circle.max((r - 1.0).abs());
            }
            worst_ball = worst_ball.max(r - 1.0);
        }
        if worst_circle > ARC_TOL {
            return Err(Error::Solver(format!(
                "witness leaves the circle over the set by {worst_circle:.3e}"
            )));
        }
        if worst_ball > ARC_TOL {
            return Err(Error::Solver(format!(
                "witness leaves the unit ball by {worst_ball:.3e}"
            )));
        }
        let dev = phi.frame_deviation();
        if !self.grid.is_wrapping() && dev > ARC_TOL {
            return Err(Error::Solver(format!(
                "witness breaks compact support: frame deviates by {dev:.3e}"
            )));
        }
        for (l, &want) in self.loops.iter().zip(&self.windings) {
            let got = winding_number(phi, l, Vec2::ZERO)?;
            if got != want {
                return Err(Error::Solver(format!(
                    "witness winds {got} times where the class demands {want}"
                )));
            }
        }
        Ok(())
    }
}

/// Circle-valued seed for a class: summed winding angles about each loop's
/// centroid, scaled by a radial ramp that is exactly 1 on the collar around
/// the set and dies before the frame and the loop centroids.
fn class_seed(
    grid: &Arc<GridManifold>,
    x_mask: &[bool],
    class: &HomotopyClass,
    radius: f64,
) -> Result<VectorMapField> {
    let d = distance_field(x_mask, grid.nx, grid.ny, grid.h, grid.is_wrapping());
    let h = grid.h;
    let collar = radius * (1.0 + 1e-12) + 4.0 * h;
    let centers: Vec<Vec2> = class
        .loops
        .iter()
        .map(|l| {
            let mut c = Vec2::ZERO;
            for &(i, j) in l {
                c = c + grid.node(i, j);
            }
            c * (1.0 / l.len() as f64)
        })
        .collect();
    let mut clear = f64::INFINITY;
    if !grid.is_wrapping() {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.on_frame(i, j) {
                    clear = clear.min(d[grid.idx(i, j)]);
                }
            }
        }
    }
    let (lo, _) = grid.extent();
    for c in &centers {
        let i = (((c.x - lo.x) / h).round() as isize).rem_euclid(grid.nx as isize) as usize;
        let j = (((c.y - lo.y) / h).round() as isize).rem_euclid(grid.ny as isize) as usize;
        clear = clear.min(d[grid.idx(i.min(grid.nx - 1), j.min(grid.ny - 1))]);
    }
    let reach = 0.9 * clear;
    if !(reach > collar + 2.0 * h) {
        return Err(Error::Solver(format!(
            "no room for the circle collar: the set reaches within {clear:.3} of the frame or a loop centroid, the collar needs {collar:.3}"
        )));
    }
    let phi = VectorMapField::from_fn(grid.clone(), |q| {
        let idx = {
            let i = (((q.x - lo.x) / h).round() as usize).min(grid.nx - 1);
            let j = (((q.y - lo.y) / h).round() as usize).min(grid.ny - 1);
            grid.idx(i, j)
        };
        let r = 1.0 - smoothstep3((d[idx] - collar) / (reach - collar));
        if r == 0.0 {
            return Vec2::ZERO;
        }
        let mut theta = 0.0;
        for (c, &w) in centers.iter().zip(&class.windings) {
            theta += w as f64 * (q - *c).angle();
        }
        Vec2::from_angle(theta) * r
    })
    .with_basepoint(Vec2::ZERO);
    for (l, &want) in class.loops.iter().zip(&class.windings) {
        let got = winding_number(&phi, l, Vec2::ZERO)?;
        if got != want {
            return Err(Error::Solver(format!(
                "winding constraint unreachable: the built map winds {got} times on a loop demanding {want}"
            )));
        }
    }
    Ok(phi)
}

struct FgFeasibility {
    grid: Arc<GridManifold>,
    /// Collar weights of the three sets: `f` dies on the first, `g` on the
    /// second, `f + g` reaches 1 on the third.
    wx: Vec<f64>,
    wy: Vec<f64>,
    wz: Vec<f64>,
    dil: [Vec<bool>; 3],
    /// Distance fields of the three masks, kept for the seed profiles.
    dists: [Vec<f64>; 3],
    pad: f64,
    collar: f64,
}

impl FgFeasibility {
    fn build(grid: &Arc<GridManifold>, masks: [&[bool]; 3], radius: f64) -> Result<FgFeasibility> {
        for (k, m) in masks.iter().enumerate() {
            if m.len() != grid.len() {
                return Err(Error::Grid(format!(
                    "mask {} has {} nodes but the grid has {}",
                    k + 1,
                    m.len(),
                    grid.len()
                )));
            }
        }
        let pad = radius * (1.0 + 1e-12);
        let collar = 4.0 * grid.h;
        let mut w = Vec::with_capacity(3);
        let mut dil = Vec::with_capacity(3);
        let mut dists = Vec::with_capacity(3);
        for m in masks {
            let d = distance_field(m, grid.nx, grid.ny, grid.h, grid.is_wrapping());
            let mut wk = vec![0.0; grid.len()];
            let mut dk = vec![false; grid.len()];
            for idx in 0..grid.len() {
                if d[idx] <= pad {
                    wk[idx] = 1.0;
                    dk[idx] = true;
                } else {
                    wk[idx] = smoothstep3(((pad + collar) - d[idx]) / collar);
                }
            }
            w.push(wk);
            dil.push(dk);
            dists.push(d);
        }
        let [wx, wy, wz] = <[Vec<f64>; 3]>::try_from(w).expect("three weights");
        let dil = <[Vec<bool>; 3]>::try_from(dil).expect("three dilations");
        let dists = <[Vec<f64>; 3]>::try_from(dists).expect("three distance fields");
        for idx in 0..grid.len() {
            if wz[idx] > 0.0 && wx[idx] >= 1.0 && wy[idx] >= 1.0 {
                return Err(Error::Solver(format!(
                    "no room for the repair: both functions are pinned to zero where their sum must approach 1, near node ({}, {})",
                    idx % grid.nx,
                    idx / grid.nx
                )));
            }
            if grid.on_frame(idx % grid.nx, idx / grid.nx) && wz[idx] > 0.0 {
                return Err(Error::Solver(
                    "the third set reaches the frame; compact support is impossible".into(),
                ));
            }
        }
        Ok(FgFeasibility {
            grid: grid.clone(),
            wx,
            wy,
            wz,
            dil,
            dists,
            pad,
            collar,
        })
    }

    /// Smooth feasible-up-to-projection start: the balance
    /// `beta = d_X / (d_X + d_Y)` switches the two functions over the X–Y
    /// separation scale, and the support profile `rho` holds 1 on the third
    /// set and dies over the largest clearance that avoids both the frame
    /// and the X∩Y overlap. Transitions at the domain scale, not the grid
    /// scale, so the starting bracket is moderate.
    fn seed(&self) -> VectorMapField {
        let grid = self.grid.clone();
        let n = grid.len();
        let [dx, dy, dz] = &self.dists;
        let mut limit = f64::INFINITY;
        for idx in 0..n {
            if self.wx[idx] >= 1.0 && self.wy[idx] >= 1.0 {
                limit = limit.min(dz[idx]);
            }
            if !grid.is_wrapping() && grid.on_frame(idx % grid.nx, idx / grid.nx) {
                limit = limit.min(dz[idx]);
            }
        }
        let reach = if limit.is_finite() {
            (0.8 * limit - self.pad).max(self.collar)
        } else {
            f64::INFINITY
        };
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; n];
        for idx in 0..n {
            let rho = if !dz[idx].is_finite() {
                0.0
            } else if dz[idx] <= self.pad {
                1.0
            } else if reach.is_finite() {
                1.0 - smoothstep3((dz[idx] - self.pad) / reach)
            } else {
                1.0
            };
            if rho == 0.0 {
                continue;
            }
            let (sx, sy) = (dx[idx], dy[idx]);
            // Empty masks have infinite distance and a vacuous constraint.
            let beta = match (sx.is_finite(), sy.is_finite()) {
                (true, true) => {
                    if sx + sy > 1e-12 {
                        sx / (sx + sy)
                    } else {
                        0.5
                    }
                }
                (false, true) => 1.0,
                (true, false) => 0.0,
                (false, false) => 0.5,
            };
            f[idx] = rho * beta;
            g[idx] = rho * (1.0 - beta);
        }
        VectorMapField {
            phi1: ScalarField::from_values(grid.clone(), f),
            phi2: ScalarField::from_values(grid, g),
            basepoint: Some(Vec2::ZERO),
        }
    }
}

impl Feasible for FgFeasibility {
    fn project(&self, phi: &VectorMapField) -> Result<VectorMapField> {
        let grid = phi.grid().clone();
        if grid.as_ref() != self.grid.as_ref() {
            return Err(Error::Grid("functions and sets live on different grids".into()));
        }
        let pairs: Vec<(f64, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut f = phi.phi1.values()[idx].clamp(0.0, 1.0);
                let mut g = phi.phi2.values()[idx].clamp(0.0, 1.0);
                let s = f + g;
                if s > 1.0 {
                    f /= s;
                    g /= s;
                }
                f *= 1.0 - self.wx[idx];
                g *= 1.0 - self.wy[idx];
                let wz = self.wz[idx];
                if wz > 0.0 {
                    let ax = 1.0 - self.wx[idx];
                    let ay = 1.0 - self.wy[idx];
                    let beta = if ax + ay > 1e-12 { ax / (ax + ay) } else { 0.5 };
                    let d = 1.0 - (f + g);
                    f += wz * beta * d;
                    g += wz * (1.0 - beta) * d;
                }
                (f, g)
            })
            .collect();
        let out = VectorMapField {
            phi1: ScalarField::from_values(grid.clone(), pairs.iter().map(|p| p.0).collect()),
            phi2: ScalarField::from_values(grid, pairs.iter().map(|p| p.1).collect()),
            basepoint: phi.basepoint,
        };
        self.verify(&out)?;
        Ok(out)
    }

    fn verify(&self, phi: &VectorMapField) -> Result<()> {
        let grid = phi.grid();
        let tol = 1e-9;
        let mut worst = (0.0f64, "");
        for idx in 0..grid.len() {
            let f = phi.phi1.values()[idx];
            let g = phi.phi2.values()[idx];
            if self.dil[0][idx] && f.abs() > worst.0 {
                worst = (f.abs(), "first function over its zero set");
            }
            if self.dil[1][idx] && g.abs() > worst.0 {
                worst = (g.abs(), "second function over its zero set");
            }
            if self.dil[2][idx] && (f + g - 1.0).abs() > worst.0 {
                worst = ((f + g - 1.0).abs(), "sum away from 1 over the third set");
            }
            let bound = (-f).max(-g).max(f + g - 1.0);
            if bound > worst.0 {
                worst = (bound, "bound violation");
            }
        }
        if worst.0 > tol {
            return Err(Error::Solver(format!(
                "two-function witness fails: {} by {:.3e}",
                worst.1, worst.0
            )));
        }
        let dev = phi.frame_deviation();
        if !grid.is_wrapping() && dev > tol {
            return Err(Error::Solver(format!(
                "two-function witness breaks compact support: frame deviates by {dev:.3e}"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Descent engine.

struct DescentOutcome {
    best: VectorMapField,
    best_value: f64,
    seed_value: f64,
    warm_feasible: bool,
    candidates: usize,
    stages: Vec<StageSummary>,
}

fn as_field(
    grid: &Arc<GridManifold>,
    u: &[f64],
    w: &[f64],
    basepoint: Option<Vec2>,
) -> VectorMapField {
    VectorMapField {
        phi1: ScalarField::from_values(grid.clone(), u.to_vec()),
        phi2: ScalarField::from_values(grid.clone(), w.to_vec()),
        basepoint,
    }
}

fn offer(
    best: &mut Option<(VectorMapField, f64)>,
    count: &mut usize,
    witness: VectorMapField,
    value: f64,
) {
    *count += 1;
    if best.as_ref().is_none_or(|(_, b)| value < *b) {
        *best = Some((witness, value));
    }
}

fn descend(
    seed: VectorMapField,
    objective: ObjectiveKind,
    schedule: &SolveSchedule,
    fs: &dyn Feasible,
) -> Result<DescentOutcome> {
    let grid = seed.grid().clone();
    let frame: Vec<bool> = (0..grid.len())
        .map(|idx| grid.on_frame(idx % grid.nx, idx / grid.nx))
        .collect();
    let mut best: Option<(VectorMapField, f64)> = None;
    let mut candidates = 0usize;

    let warm_feasible = fs.verify(&seed).is_ok();
    if warm_feasible {
        let val = true_objective(
            &bracket_of(&grid, seed.phi1.values(), seed.phi2.values()),
            objective,
        );
        offer(&mut best, &mut candidates, seed.clone(), val);
    }
    let start = fs.project(&seed)?;
    let start_val = true_objective(
        &bracket_of(&grid, start.phi1.values(), start.phi2.values()),
        objective,
    );
    offer(&mut best, &mut candidates, start.clone(), start_val);
    let seed_value = best.as_ref().expect("candidate 0 recorded").1;

    let runs = 1 + schedule.restarts;
    let mut stages = Vec::new();
    for run in 0..runs {
        let basepoint = start.basepoint;
        let (mut u, mut w) = if run == 0 {
            (
                start.phi1.values().to_vec(),
                start.phi2.values().to_vec(),
            )
        } else {
            let seed_bits = schedule
                .seed
                .expect("restarts were validated to carry a seed")
                ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed_bits);
            let scale = start
                .phi1
                .values()
                .iter()
                .chain(start.phi2.values())
                .fold(0.0f64, |m, &x| m.max(x.abs()));
            let amp = 0.05 * scale.max(0.2);
            let mut pu = start.phi1.values().to_vec();
            let mut pw = start.phi2.values().to_vec();
            for idx in 0..grid.len() {
                if !frame[idx] {
                    pu[idx] += amp * rng.gen_range(-1.0..1.0);
                    pw[idx] += amp * rng.gen_range(-1.0..1.0);
                }
            }
            let projected = fs.project(&as_field(&grid, &pu, &pw, basepoint))?;
            let val = true_objective(
                &bracket_of(&grid, projected.phi1.values(), projected.phi2.values()),
                objective,
            );
            let out = (
                projected.phi1.values().to_vec(),
                projected.phi2.values().to_vec(),
            );
            offer(&mut best, &mut candidates, projected, val);
            out
        };

        for &p in &schedule.exponents {
            let mut step = schedule.step;
            let step_cap = schedule.step * 8.0;
            let mut iterations = 0usize;
            let mut accepted = 0usize;
            let mut projections = 0usize;
            let initial_objective =
                smoothed_objective(&bracket_of(&grid, &u, &w, ), objective, p);
            let mut jval = initial_objective;
            let mut history: VecDeque<f64> = VecDeque::new();
            history.push_back(jval);

            let stop = loop {
                if iterations >= schedule.max_iterations {
                    break StopReason::MaxIterations;
                }
                iterations += 1;
                let (j0, du, dw) = objective_gradient(&grid, &u, &w, &frame, objective, p);
                jval = j0;
                let gn2: f64 = du.iter().map(|x| x * x).sum::<f64>()
                    + dw.iter().map(|x| x * x).sum::<f64>();
                if gn2 <= 1e-30 {
                    break StopReason::Tolerance;
                }
                let mut moved = false;
                while step >= 1e-14 {
                    let tu: Vec<f64> = (0..u.len()).map(|k| u[k] - step * du[k]).collect();
                    let tw: Vec<f64> = (0..w.len()).map(|k| w[k] - step * dw[k]).collect();
                    let jt = smoothed_objective(&bracket_of(&grid, &tu, &tw), objective, p);
                    if jt <= jval - 1e-4 * step * gn2 {
                        u = tu;
                        w = tw;
                        jval = jt;
                        accepted += 1;
                        step = (step * 1.25).min(step_cap);
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break StopReason::StepFloor;
                }
                history.push_back(jval);
                if history.len() > schedule.plateau_window + 1 {
                    history.pop_front();
                }
                if history.len() == schedule.plateau_window + 1 {
                    let oldest = *history.front().expect("nonempty window");
                    if oldest - jval <= schedule.tolerance * oldest.abs().max(1e-12) {
                        break StopReason::Plateau;
                    }
                }
                if accepted % schedule.projection_cadence == 0 {
                    let proj = fs.project(&as_field(&grid, &u, &w, basepoint))?;
                    projections += 1;
                    let val = true_objective(
                        &bracket_of(&grid, proj.phi1.values(), proj.phi2.values()),
                        objective,
                    );
                    u = proj.phi1.values().to_vec();
                    w = proj.phi2.values().to_vec();
                    offer(&mut best, &mut candidates, proj, val);
                    history.clear();
                    jval = smoothed_objective(&bracket_of(&grid, &u, &w), objective, p);
                    history.push_back(jval);
                }
            };

            let proj = fs.project(&as_field(&grid, &u, &w, basepoint))?;
            projections += 1;
            let b = bracket_of(&grid, proj.phi1.values(), proj.phi2.values());
            let val = true_objective(&b, objective);
            let final_objective = smoothed_objective(&b, objective, p);
            u = proj.phi1.values().to_vec();
            w = proj.phi2.values().to_vec();
            offer(&mut best, &mut candidates, proj, val);
            stages.push(StageSummary {
                restart: run,
                exponent: p,
                iterations,
                accepted,
                projections,
                initial_objective,
                final_objective,
                final_true: val,
                stop,
            });
        }
    }
    let (best, best_value) = best.expect("at least the start candidate exists");
    Ok(DescentOutcome {
        best,
        best_value,
        seed_value,
        warm_feasible,
        candidates,
        stages,
    })
}

/// Re-evaluates the winning witness and assembles the certificate; any drift
/// against the recorded candidate value is a bug worth failing loudly on.
#[allow(clippy::too_many_arguments)]
fn certify(
    outcome: DescentOutcome,
    kind: InvariantKind,
    objective: ObjectiveKind,
    n_sets: usize,
    eps: f64,
    radius: f64,
    warm_start: bool,
    lowercase: impl Fn(f64) -> Option<f64>,
) -> Result<PbEstimate> {
    let grid = outcome.best.grid().clone();
    let value = true_objective(
        &bracket_of(&grid, outcome.best.phi1.values(), outcome.best.phi2.values()),
        objective,
    );
    if (value - outcome.best_value).abs() > 1e-9 {
        return Err(Error::Solver(format!(
            "certified value drifted on re-evaluation: {value} vs {}",
            outcome.best_value
        )));
    }
    Ok(PbEstimate {
        kind,
        value,
        lowercase_value: lowercase(value),
        objective,
        n_sets,
        nx: grid.nx,
        ny: grid.ny,
        h: grid.h,
        wrapping: grid.is_wrapping(),
        eps,
        radius,
        seed_value: outcome.seed_value,
        warm_start,
        warm_start_feasible: outcome.warm_feasible,
        candidates: outcome.candidates,
        stages: outcome.stages,
        witness_ref: None,
        witness: outcome.best,
    })
}

/// Certified upper estimate of the marked-domain invariant of `config` over
/// `mb`. A warm-start map is recorded as candidate 0 whenever it verifies,
/// which makes seeded runs monotone against the witness they started from.
pub fn estimate_pb(
    config: &SetConfig,
    mb: &MarkedBoundary,
    objective: ObjectiveKind,
    schedule: &SolveSchedule,
    warm: Option<&VectorMapField>,
) -> Result<PbEstimate> {
    schedule.validate()?;
    let grid = config.grid().clone();
    let radius = 2.0 * grid.h;
    let fs = MarkedFeasibility::build(config, mb, schedule.eps, radius)?;
    let seed = match warm {
        Some(w) => {
            if w.grid().as_ref() != grid.as_ref() {
                return Err(Error::Grid("warm start lives on a different grid".into()));
            }
            w.clone()
        }
        None => initial_admissible_map(config, mb)?,
    };
    let outcome = descend(seed, objective, schedule, &fs)?;
    let n = config.n();
    let kind = match objective {
        ObjectiveKind::Sup => InvariantKind::PbN,
        ObjectiveKind::Max => InvariantKind::Pb4Plus,
    };
    certify(
        outcome,
        kind,
        objective,
        n,
        schedule.eps,
        radius,
        warm.is_some(),
        |value| match n {
            3 => Some(value / 2.0),
            4 => Some(value),
            _ => None,
        },
    )
}

/// Certified upper estimate of the circle-valued invariant of the class over
/// the set: values stay in the unit ball, are circle-valued on the dilated
/// mask, wind as the class demands, and vanish on the frame.
pub fn estimate_pb_class(
    grid: &Arc<GridManifold>,
    x_mask: &[bool],
    class: &HomotopyClass,
    objective: ObjectiveKind,
    schedule: &SolveSchedule,
    warm: Option<&VectorMapField>,
) -> Result<PbEstimate> {
    schedule.validate()?;
    let radius = 2.0 * grid.h;
    let fs = ClassFeasibility::build(grid, x_mask, class, radius)?;
    let seed = match warm {
        Some(w) => {
            if w.grid().as_ref() != grid.as_ref() {
                return Err(Error::Grid("warm start lives on a different grid".into()));
            }
            w.clone()
        }
        None => class_seed(grid, x_mask, class, radius)?,
    };
    let outcome = descend(seed, objective, schedule, &fs)?;
    certify(
        outcome,
        InvariantKind::PbAlpha,
        objective,
        1,
        schedule.eps,
        radius,
        warm.is_some(),
        |_| None,
    )
}

/// Certified upper estimate of the three-set invariant in its two-function
/// form: minimizes `sup |{F, G}|` subject to `F = 0` on the first set,
/// `G = 0` on the second, `F + G = 1` on the third, `F, G >= 0`,
/// `F + G <= 1`, and compact support. The value is already in the
/// half-normalization of the marked three-set form. Masks may be empty, in
/// which case their constraints are vacuous.
pub fn estimate_pb3_fg(
    grid: &Arc<GridManifold>,
    x_mask: &[bool],
    y_mask: &[bool],
    z_mask: &[bool],
    schedule: &SolveSchedule,
    warm: Option<&VectorMapField>,
) -> Result<PbEstimate> {
    schedule.validate()?;
    let radius = 2.0 * grid.h;
    let fs = FgFeasibility::build(grid, [x_mask, y_mask, z_mask], radius)?;
    let seed = match warm {
        Some(w) => {
            if w.grid().as_ref() != grid.as_ref() {
                return Err(Error::Grid("warm start lives on a different grid".into()));
            }
            w.clone()
        }
        None => fs.seed(),
    };
    let outcome = descend(seed, ObjectiveKind::Sup, schedule, &fs)?;
    certify(
        outcome,
        InvariantKind::Pb3,
        ObjectiveKind::Sup,
        3,
        schedule.eps,
        radius,
        warm.is_some(),
        |value| Some(value),
    )
}

// ---------------------------------------------------------------------------
// Theorem checks.

/// One verified inequality of a theorem check; passes when `lhs <= rhs`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub note: String,
}

fn line(name: &str, lhs: f64, rhs: f64, note: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        lhs,
        rhs,
        pass: lhs <= rhs,
        note,
    }
}

/// Outcome of one structural check: named inequalities plus the scalars that
/// went into them.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub lines: Vec<CheckLine>,
    pub values: Vec<(String, f64)>,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }
}

fn dilate4(mask: &[bool], nx: usize, ny: usize, wrap: bool) -> Vec<bool> {
    let mut out = mask.to_vec();
    for j in 0..ny {
        for i in 0..nx {
            if mask[j * nx + i] {
                continue;
            }
            let mut near = false;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (ii, jj) = if wrap {
                    (
                        (i as i64 + di).rem_euclid(nx as i64) as usize,
                        (j as i64 + dj).rem_euclid(ny as i64) as usize,
                    )
                } else {
                    let ii = (i as i64 + di).clamp(0, nx as i64 - 1) as usize;
                    let jj = (j as i64 + dj).clamp(0, ny as i64 - 1) as usize;
                    (ii, jj)
                };
                near |= mask[jj * nx + ii];
            }
            out[j * nx + i] = near;
        }
    }
    out
}

fn relax_hot(vals: &[f64], hot: &[bool], nx: usize, ny: usize, wrap: bool) -> Vec<f64> {
    let mut out = vals.to_vec();
    for j in 0..ny {
        for i in 0..nx {
            if !hot[j * nx + i] {
                continue;
            }
            let mut acc = 0.0;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (ii, jj) = if wrap {
                    (
                        (i as i64 + di).rem_euclid(nx as i64) as usize,
                        (j as i64 + dj).rem_euclid(ny as i64) as usize,
                    )
                } else {
                    let ii = (i as i64 + di).clamp(0, nx as i64 - 1) as usize;
                    let jj = (j as i64 + dj).clamp(0, ny as i64 - 1) as usize;
                    (ii, jj)
                };
                acc += vals[jj * nx + ii];
            }
            out[j * nx + i] = 0.5 * vals[j * nx + i] + 0.125 * acc;
        }
    }
    out
}

/// Melts the difference spikes a piecewise-linear post-composition leaves
/// along its fold creases: nodes whose bracket magnitude exceeds `target`
/// are averaged with their neighbours (together with a small halo) and the
/// result re-projected, until the whole field clears the threshold or the
/// sweep budget runs out. Values average inside a convex domain, so the
/// sweeps never leave it, and the bulk field is untouched — this is the
/// discrete sample of a mollified composite, which the crease artifact
/// calls for, not a new witness.
fn melt_spikes(
    phi: &VectorMapField,
    fs: &dyn Feasible,
    target: f64,
    max_sweeps: usize,
) -> Result<VectorMapField> {
    let grid = phi.grid().clone();
    let (nx, ny) = (grid.nx, grid.ny);
    let wrap = grid.is_wrapping();
    let frame_held = |hot: &mut Vec<bool>| {
        if !wrap {
            for j in 0..ny {
                for i in 0..nx {
                    if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                        hot[j * nx + i] = false;
                    }
                }
            }
        }
    };
    let mut cur = fs.project(phi)?;
    let mut best = cur.clone();
    let mut best_sup = f64::INFINITY;
    let mut stall = 0usize;
    for _ in 0..max_sweeps {
        let bracket = cur.bracket();
        let sup = bracket.sup_norm();
        if sup < best_sup * (1.0 - 1e-9) {
            best = cur.clone();
            best_sup = sup;
            stall = 0;
        } else {
            stall += 1;
        }
        // The relax/project loop is not monotone: long diffusion drags the
        // hot front outward and re-sharpens arc-pinned creases. Keep the best
        // state seen and bail once the record stops moving.
        if best_sup <= target || stall > 400 {
            break;
        }
        let mut hot: Vec<bool> = bracket.values().iter().map(|x| x.abs() > target).collect();
        frame_held(&mut hot);
        if !hot.iter().any(|&b| b) {
            break;
        }
        for _ in 0..2 {
            hot = dilate4(&hot, nx, ny, wrap);
        }
        frame_held(&mut hot);
        let p1 = relax_hot(cur.phi1.values(), &hot, nx, ny, wrap);
        let p2 = relax_hot(cur.phi2.values(), &hot, nx, ny, wrap);
        let next = VectorMapField {
            phi1: ScalarField::from_values(grid.clone(), p1),
            phi2: ScalarField::from_values(grid.clone(), p2),
            basepoint: cur.basepoint,
        };
        cur = fs.project(&next)?;
    }
    Ok(best)
}

/// Verifies constructively that merging the last two sets preserves the
/// estimate in both directions: dropping the last mark keeps the witness, and
/// the push/collapse/polish pipeline rebuilds an N-point witness from the
/// merged one within the collapse budget.
pub fn theorem_check_reduction(
    config: &SetConfig,
    mb: &MarkedBoundary,
    schedule: &SolveSchedule,
    eps: f64,
    delta: f64,
) -> Result<TheoremReport> {
    let n = config.n();
    if n < 4 {
        return Err(Error::Solver(format!(
            "the merge check needs at least 4 sets, got {n}"
        )));
    }
    if mb.len() != n {
        return Err(Error::Solver(format!("{n} sets but {} marks", mb.len())));
    }
    let grid = config.grid().clone();
    let h = grid.h;
    let radius = 2.0 * h;

    let e_n = estimate_pb(config, mb, ObjectiveKind::Sup, schedule, None)?;
    let (merged_cfg, merged_mb, cert_forget) = forget_point(&e_n.witness, config, mb, radius)?;
    if !cert_forget.pass {
        return Err(Error::Solver(
            "witness lost admissibility while dropping the last mark".into(),
        ));
    }
    let e_m = estimate_pb(
        &merged_cfg,
        &merged_mb,
        ObjectiveKind::Sup,
        schedule,
        Some(&e_n.witness),
    )?;

    let eps0 = 0.25;
    let (pushed, cert_push) = push_away(&e_m.witness, config, &merged_mb, eps0, delta, radius)?;
    let (collapsed, roofed_mb, cert_collapse) =
        collapse_vertex(&pushed, config, &merged_mb, eps, delta, radius)?;
    let factor = (1.0 + eps) / (1.0 - eps);
    let budget = factor * e_m.value + delta * cert_push.c_rho + 10.0 * h;
    // The collapse folds leave h-independent crease spikes; melt them back
    // to the certificate level before polishing, keeping the witness lineage.
    let fs_roofed = MarkedFeasibility::build(config, &roofed_mb, schedule.eps, radius)?;
    let softened = melt_spikes(&collapsed, &fs_roofed, budget - 5.0 * h, 2500)?;
    let e_pol = estimate_pb(
        config,
        &roofed_mb,
        ObjectiveKind::Sup,
        schedule,
        Some(&softened),
    )?;
    let lines = vec![
        line(
            "merged estimate not above the n-point estimate",
            e_m.value,
            e_n.value + 1e-9,
            "the n-point witness is reused verbatim after dropping the last mark".into(),
        ),
        line(
            "restored n-point witness meets the collapse budget",
            e_pol.value,
            budget,
            format!(
                "push (delta {delta}, c_rho {:.3e}) then collapse (eps {eps}) then polish",
                cert_push.c_rho
            ),
        ),
    ];

    let mut values = vec![
        ("n_point".to_string(), e_n.value),
        ("merged".to_string(), e_m.value),
        ("pushed_sup".to_string(), cert_push.base.output_sup),
        ("collapsed_sup".to_string(), cert_collapse.base.output_sup),
        ("polished".to_string(), e_pol.value),
        ("c_rho".to_string(), cert_push.c_rho),
        ("budget".to_string(), budget),
    ];
    if n == 4 {
        values.push(("pb4".to_string(), e_n.value));
        values.push(("pb3_of_merged".to_string(), e_m.value / 2.0));
    }
    Ok(TheoremReport {
        theorem: "merging the last two sets preserves the invariant".into(),
        lines,
        values,
    })
}

/// Splits the three-set configuration along a shrinking neighborhood of
/// `X1 ∩ X3` and checks that the four-set estimates close in on the
/// three-set one.
pub fn theorem_check_limit(
    config: &SetConfig,
    mb3: &MarkedBoundary,
    mb4: &MarkedBoundary,
    radii: &[f64],
    schedule: &SolveSchedule,
) -> Result<TheoremReport> {
    if config.n() != 3 {
        return Err(Error::Solver(format!(
            "the split check needs exactly 3 sets, got {}",
            config.n()
        )));
    }
    if mb3.len() != 3 || mb4.len() != 4 {
        return Err(Error::Solver(
            "the split check needs a 3-marked and a 4-marked boundary".into(),
        ));
    }
    if radii.is_empty() {
        return Err(Error::Solver("no neighborhood radii supplied".into()));
    }
    let grid = config.grid().clone();
    let core: Vec<bool> = (0..grid.len())
        .map(|idx| config.mask(0)[idx] && config.mask(2)[idx])
        .collect();
    if !core.iter().any(|&m| m) {
        return Err(Error::Solver(
            "the first and third sets do not meet, so every splitting neighborhood of their intersection is empty; supply overlapping sets".into(),
        ));
    }

    let e3 = estimate_pb(config, mb3, ObjectiveKind::Sup, schedule, None)?;
    let mut values = vec![("three_point".to_string(), e3.value)];
    let mut gaps: Vec<f64> = Vec::with_capacity(radii.len());
    let mut prev: Option<VectorMapField> = None;
    for (i, &r) in radii.iter().enumerate() {
        let k = crate::sets::neighborhood(&grid, &core, r)?;
        let split = config.split_by_neighborhood(&k)?;
        let e4 = estimate_pb(&split, mb4, ObjectiveKind::Sup, schedule, prev.as_ref())?;
        values.push((format!("four_point_{i}"), e4.value));
        let gap = (e4.value - e3.value).abs();
        values.push((format!("gap_{i}"), gap));
        gaps.push(gap);
        prev = Some(e4.witness);
    }
    let lines = (1..gaps.len())
        .map(|i| {
            line(
                &format!("gap does not grow from radius {} to {}", i - 1, i),
                gaps[i],
                gaps[i - 1] + 1e-6,
                "four-set estimate against the three-set one".into(),
            )
        })
        .collect();
    Ok(TheoremReport {
        theorem: "splitting along a shrinking neighborhood approaches the three-set value".into(),
        lines,
        values,
    })
}

/// Checks that multiplying the class multiplies the estimate at most k-fold:
/// once by transporting the base witness through the angle-power map, once by
/// an independent run on the multiplied class.
pub fn theorem_check_subhomogeneity(
    grid: &Arc<GridManifold>,
    x_mask: &[bool],
    class: &HomotopyClass,
    k: u32,
    schedule: &SolveSchedule,
    eps: f64,
) -> Result<TheoremReport> {
    if k == 0 {
        return Err(Error::Solver("the multiplier must be at least 1".into()));
    }
    let h = grid.h;
    let radius = 2.0 * h;
    let e1 = estimate_pb_class(grid, x_mask, class, ObjectiveKind::Sup, schedule, None)?;
    let (lifted, cert) = power_transform(&e1.witness, x_mask, &class.loops, k, eps, radius)?;
    let class_k = HomotopyClass {
        loops: class.loops.clone(),
        windings: class.windings.iter().map(|w| w * k as i64).collect(),
    };
    let factor = k as f64 * (1.0 + eps) / (1.0 - eps);
    let allowance = 10.0 * h * k as f64 * (1.0 + e1.value);
    let budget = factor * e1.value + allowance;
    let e_scratch = estimate_pb_class(
        grid,
        x_mask,
        &class_k,
        ObjectiveKind::Sup,
        schedule,
        None,
    )?;
    drop(lifted);

    let winding_defect = cert
        .windings_in
        .iter()
        .zip(&cert.windings_out)
        .map(|(&a, &b)| (b - k as i64 * a).abs())
        .max()
        .unwrap_or(0) as f64;
    let lines = vec![
        line(
            "power-lifted witness meets the k-fold budget",
            cert.output_sup,
            budget,
            format!("angle power k = {k} at collar eps = {eps}"),
        ),
        line(
            "lifted windings are exact integer multiples",
            winding_defect,
            0.0,
            format!("in {:?}, out {:?}", cert.windings_in, cert.windings_out),
        ),
        line(
            "independent k-fold estimate meets the same budget",
            e_scratch.value,
            budget,
            "fresh descent on the multiplied class".into(),
        ),
    ];
    Ok(TheoremReport {
        theorem: "multiplying the class multiplies the estimate at most k-fold".into(),
        lines,
        values: vec![
            ("base".to_string(), e1.value),
            ("lifted_sup".to_string(), cert.output_sup),
            ("scratch".to_string(), e_scratch.value),
            ("budget".to_string(), budget),
            ("k".to_string(), k as f64),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admissible::trace_boundary_loop;
    use crate::geometry::ConvexDomain;

    fn quick_schedule() -> SolveSchedule {
        SolveSchedule {
            exponents: vec![8.0, 32.0],
            step: 0.5,
            projection_cadence: 20,
            max_iterations: 120,
            tolerance: 1e-6,
            plateau_window: 40,
            eps: 0.05,
            seed: None,
            restarts: 0,
        }
    }

    fn box_grid(n: usize) -> Arc<GridManifold> {
        GridManifold::plane_box(-0.5, -0.5, 1.5, 1.5, n).unwrap()
    }

    fn mask_of(grid: &Arc<GridManifold>, f: impl Fn(Vec2) -> bool + Sync) -> Vec<bool> {
        (0..grid.len())
            .map(|idx| f(grid.node(idx % grid.nx, idx / grid.nx)))
            .collect()
    }

    fn marks3(domain: ConvexDomain) -> MarkedBoundary {
        MarkedBoundary::from_points(domain, &[v(0.0, 1.0), v(0.5, 0.0), v(1.0, 1.0)]).unwrap()
    }

    fn marks4(domain: ConvexDomain) -> MarkedBoundary {
        MarkedBoundary::from_points(
            domain,
            &[v(0.0, 1.0), v(0.5, 0.0), v(1.0, 1.0), v(0.5, 1.0)],
        )
        .unwrap()
    }

    fn disc_mask(grid: &Arc<GridManifold>, c: Vec2, r: f64) -> Vec<bool> {
        mask_of(grid, |q| q.dist(c) <= r)
    }

    fn three_disc_config(grid: &Arc<GridManifold>) -> SetConfig {
        SetConfig::from_masks(
            grid.clone(),
            vec![
                disc_mask(grid, v(0.15, 0.3), 0.12),
                disc_mask(grid, v(0.85, 0.3), 0.12),
                disc_mask(grid, v(0.5, 0.85), 0.12),
            ],
        )
        .unwrap()
    }

    fn annulus_fixture(thickness: f64) -> (Arc<GridManifold>, Vec<bool>, HomotopyClass) {
        let grid = GridManifold::plane_box(-2.0, -2.0, 2.0, 2.0, 97).unwrap();
        let mask = mask_of(&grid, |q| (q.norm() - 1.0).abs() <= thickness);
        let lp = trace_boundary_loop(&grid, &mask).unwrap();
        let class = HomotopyClass {
            loops: vec![lp],
            windings: vec![1],
        };
        (grid, mask, class)
    }

    /// Three thickened circle arcs on the torus, pairwise overlapping with an
    /// empty triple intersection, so the decomposition winds and the
    /// invariant is positive.
    fn band_config() -> (Arc<GridManifold>, SetConfig) {
        let grid = GridManifold::torus(0.0, 0.0, 2.0, 2.0, 97).unwrap();
        let c = v(1.0, 1.0);
        let band = move |q: Vec2, a0: f64, a1: f64| {
            let r = (q - c).norm();
            if (r - 0.5).abs() > 0.1 {
                return false;
            }
            let ang = (q - c).angle().rem_euclid(std::f64::consts::TAU);
            let a0 = a0.rem_euclid(std::f64::consts::TAU);
            let a1 = a1.rem_euclid(std::f64::consts::TAU);
            if a0 <= a1 {
                ang >= a0 && ang <= a1
            } else {
                ang >= a0 || ang <= a1
            }
        };
        let deg = std::f64::consts::PI / 180.0;
        let config = SetConfig::from_masks(
            grid.clone(),
            vec![
                mask_of(&grid, |q| band(q, -15.0 * deg, 135.0 * deg)),
                mask_of(&grid, |q| band(q, 105.0 * deg, 255.0 * deg)),
                mask_of(&grid, |q| band(q, 225.0 * deg, 15.0 * deg)),
            ],
        )
        .unwrap();
        (grid, config)
    }

    #[test]
    fn smoothed_objectives_bound_the_true_ones() {
        let b = [0.3, -1.2, 0.9, 0.0, -0.4];
        for p in [8.0, 32.0, 128.0] {
            let s = smoothed_objective(&b, ObjectiveKind::Sup, p);
            assert!(s >= 1.2 && s <= 1.2 * (b.len() as f64).powf(1.0 / p) + 1e-12);
            let m = smoothed_objective(&b, ObjectiveKind::Max, p);
            assert!(m >= 0.9 && m <= 0.9 + (b.len() as f64).ln() / p + 1e-12);
        }
        assert_eq!(smoothed_objective(&[0.0; 4], ObjectiveKind::Sup, 8.0), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let grid = GridManifold::torus(0.0, 0.0, 2.0, 2.0, 33).unwrap();
        let phi = VectorMapField::from_fn(grid, |q| {
            v(
                (std::f64::consts::PI * q.x).sin() * (0.7 * q.y).cos(),
                (std::f64::consts::PI * q.y).sin() + 0.3 * (2.1 * q.x).cos(),
            )
        });
        let e_sup = gradient_check(&phi, ObjectiveKind::Sup, 8.0, 30, 1e-5).unwrap();
        assert!(e_sup < 1e-5, "sup-objective gradient off by {e_sup:.3e}");
        let e_max = gradient_check(&phi, ObjectiveKind::Max, 8.0, 30, 1e-5).unwrap();
        assert!(e_max < 1e-5, "max-objective gradient off by {e_max:.3e}");
    }

    #[test]
    fn three_disc_estimate_descends_and_certifies() {
        let grid = box_grid(65);
        let config = three_disc_config(&grid);
        let mb = marks3(ConvexDomain::square(1.0).unwrap());
        let e = estimate_pb(&config, &mb, ObjectiveKind::Sup, &quick_schedule(), None).unwrap();
        assert!(e.value > 0.0);
        assert!(e.value <= e.seed_value + 1e-12, "descent went backwards");
        assert_eq!(e.value, e.witness.bracket().sup_norm(), "certificate drifted");
        assert_eq!(e.kind, InvariantKind::PbN);
        assert_eq!(e.lowercase_value, Some(e.value / 2.0));
        assert_eq!(e.stages.len(), 2);
        assert!(e.candidates >= 3);
    }

    #[test]
    fn strip_tuple_on_the_torus_estimates_zero() {
        let grid = GridManifold::torus(0.0, 0.0, 2.0, 2.0, 64).unwrap();
        let strip = |c: f64| {
            mask_of(&grid, move |q| {
                let d = (q.x - c).abs();
                d.min(2.0 - d) <= 0.15
            })
        };
        let config =
            SetConfig::from_masks(grid.clone(), vec![strip(0.3), strip(1.0), strip(1.7)]).unwrap();
        let mb = marks3(ConvexDomain::square(1.0).unwrap());
        let e = estimate_pb(&config, &mb, ObjectiveKind::Sup, &quick_schedule(), None).unwrap();
        // The initializer only sees x, so the zero-bracket witness is found
        // before the first step.
        assert!(e.value <= 1e-8, "strips admit a functionally dependent map, got {}", e.value);
    }

    #[test]
    fn max_objective_reports_a_signed_bound() {
        let grid = box_grid(65);
        let config = three_disc_config(&grid);
        let mb = marks3(ConvexDomain::square(1.0).unwrap());
        let e = estimate_pb(&config, &mb, ObjectiveKind::Max, &quick_schedule(), None).unwrap();
        assert!(e.value >= -0.1, "signed max fell to {}", e.value);
        assert_eq!(e.kind, InvariantKind::Pb4Plus);
        assert_eq!(e.value, e.witness.bracket().max_value());
    }

    #[test]
    fn fg_form_zero_third_set_gives_the_zero_witness() {
        let grid = box_grid(65);
        let x = disc_mask(&grid, v(0.15, 0.3), 0.12);
        let y = disc_mask(&grid, v(0.85, 0.3), 0.12);
        let z = vec![false; grid.len()];
        let e = estimate_pb3_fg(&grid, &x, &y, &z, &quick_schedule(), None).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.witness.phi1.values().iter().all(|&x| x == 0.0));
        assert!(e.witness.phi2.values().iter().all(|&x| x == 0.0));
        assert_eq!(e.kind, InvariantKind::Pb3);
    }

    #[test]
    fn fg_and_marked_forms_roughly_agree() {
        let (grid, config) = band_config();
        let mb = marks3(ConvexDomain::square(1.0).unwrap());
        let marked = estimate_pb(&config, &mb, ObjectiveKind::Sup, &quick_schedule(), None)
            .unwrap()
            .value;
        let fg = estimate_pb3_fg(
            &grid,
            config.mask(0),
            config.mask(1),
            config.mask(2),
            &quick_schedule(),
            None,
        )
        .unwrap()
        .value;
        assert!(fg > 0.0, "the winding obstruction forces a positive value");
        let ratio = fg / (marked / 2.0);
        assert!(
            (0.4..2.5).contains(&ratio),
            "two-function {fg} vs half-marked {} (ratio {ratio})",
            marked / 2.0
        );
    }

    #[test]
    fn class_estimate_on_the_annulus_certifies_the_winding() {
        let (grid, mask, class) = annulus_fixture(0.15);
        let e = estimate_pb_class(&grid, &mask, &class, ObjectiveKind::Sup, &quick_schedule(), None)
            .unwrap();
        assert!(e.value > 0.0);
        assert!(e.value <= e.seed_value + 1e-12);
        let rewound = winding_number(&e.witness, &class.loops[0], Vec2::ZERO).unwrap();
        assert_eq!(rewound, 1);
        assert_eq!(e.kind, InvariantKind::PbAlpha);
    }

    #[test]
    fn class_estimate_rejects_an_unreachable_winding() {
        let (grid, mask, class) = annulus_fixture(0.15);
        // The same loop demanded to wind both once and twice: no map does.
        let contradictory = HomotopyClass {
            loops: vec![class.loops[0].clone(), class.loops[0].clone()],
            windings: vec![1, 2],
        };
        let err = estimate_pb_class(
            &grid,
            &mask,
            &contradictory,
            ObjectiveKind::Sup,
            &quick_schedule(),
            None,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("unreachable"),
            "expected a winding unreachability error, got: {msg}"
        );
    }

    #[test]
    fn seeded_restriction_is_monotone() {
        let (grid, thick, _) = annulus_fixture(0.2);
        let (_, thin, _) = annulus_fixture(0.1);
        let lp = trace_boundary_loop(&grid, &thin).unwrap();
        let class = HomotopyClass {
            loops: vec![lp],
            windings: vec![1],
        };
        let e_thick =
            estimate_pb_class(&grid, &thick, &class, ObjectiveKind::Sup, &quick_schedule(), None)
                .unwrap();
        let e_thin = estimate_pb_class(
            &grid,
            &thin,
            &class,
            ObjectiveKind::Sup,
            &quick_schedule(),
            Some(&e_thick.witness),
        )
        .unwrap();
        assert!(e_thin.warm_start_feasible, "the larger witness must restrict");
        assert!(
            e_thin.value <= e_thick.value + 1e-9,
            "restriction broke monotonicity: {} > {}",
            e_thin.value,
            e_thick.value
        );
    }

    #[test]
    fn estimates_are_deterministic() {
        let grid = box_grid(65);
        let config = three_disc_config(&grid);
        let mb = marks3(ConvexDomain::square(1.0).unwrap());
        let mut schedule = quick_schedule();
        schedule.seed = Some(7);
        schedule.restarts = 1;
        let a = estimate_pb(&config, &mb, ObjectiveKind::Sup, &schedule, None).unwrap();
        let b = estimate_pb(&config, &mb, ObjectiveKind::Sup, &schedule, None).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.candidates, b.candidates);
        for (x, y) in a
            .witness
            .phi1
            .values()
            .iter()
            .zip(b.witness.phi1.values())
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn schedule_rejects_bad_parameters() {
        let mut s = SolveSchedule::default();
        s.exponents = vec![32.0, 8.0];
        assert!(s.validate().is_err());
        let mut s = SolveSchedule::default();
        s.restarts = 2;
        assert!(s.validate().is_err());
        let mut s = SolveSchedule::default();
        s.eps = 0.6;
        assert!(s.validate().is_err());
        assert!(SolveSchedule::default().validate().is_ok());
    }

    #[test]
    fn reduction_check_passes_on_a_four_disc_tuple() {
        let grid = box_grid(65);
        let config = SetConfig::from_masks(
            grid.clone(),
            vec![
                disc_mask(&grid, v(0.15, 0.3), 0.1),
                disc_mask(&grid, v(0.85, 0.3), 0.1),
                disc_mask(&grid, v(0.62, 0.85), 0.1),
                disc_mask(&grid, v(0.38, 0.85), 0.1),
            ],
        )
        .unwrap();
        let mb = marks4(ConvexDomain::square(1.0).unwrap());
        let report =
            theorem_check_reduction(&config, &mb, &quick_schedule(), 0.05, 0.01).unwrap();
        assert!(report.all_pass(), "reduction check failed: {report:#?}");
        let get = |n: &str| report.values.iter().find(|(k, _)| k == n).unwrap().1;
        assert!(get("merged") <= get("n_point") + 1e-9);
        assert!(get("pb4") == get("n_point"));
    }

    #[test]
    fn limit_check_reports_the_gap_sequence() {
        let (grid, config) = band_config();
        let mb3 = marks3(ConvexDomain::square(1.0).unwrap());
        let mb4 = MarkedBoundary::from_points(
            ConvexDomain::square(1.0).unwrap(),
            &[v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)],
        )
        .unwrap();
        let h = grid.h;
        let report =
            theorem_check_limit(&config, &mb3, &mb4, &[6.0 * h, 3.0 * h], &quick_schedule())
                .unwrap();
        assert_eq!(report.lines.len(), 1);
        let gaps: Vec<f64> = report
            .values
            .iter()
            .filter(|(k, _)| k.starts_with("gap_"))
            .map(|(_, x)| *x)
            .collect();
        assert_eq!(gaps.len(), 2);
        assert!(gaps.iter().all(|g| g.is_finite()));
        assert!(report.all_pass(), "gap grew: {report:#?}");
    }

    #[test]
    fn limit_check_demands_an_overlap() {
        let grid = box_grid(65);
        let config = three_disc_config(&grid);
        let mb3 = marks3(ConvexDomain::square(1.0).unwrap());
        let mb4 = marks4(ConvexDomain::square(1.0).unwrap());
        let err = theorem_check_limit(&config, &mb3, &mb4, &[0.1], &quick_schedule()).unwrap_err();
        assert!(err.to_string().contains("overlapping sets"));
    }

    #[test]
    fn subhomogeneity_check_doubles_the_annulus_class() {
        let (grid, mask, class) = annulus_fixture(0.15);
        let report =
            theorem_check_subhomogeneity(&grid, &mask, &class, 2, &quick_schedule(), 0.05).unwrap();
        assert!(report.all_pass(), "subhomogeneity failed: {report:#?}");
        let get = |n: &str| report.values.iter().find(|(k, _)| k == n).unwrap().1;
        assert!(get("lifted_sup") <= get("budget"));
        assert!(get("scratch") <= get("budget"));
    }
}
