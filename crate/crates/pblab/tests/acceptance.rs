//! Acceptance suite: one test per release criterion, each printing a single
//! `[acceptance] <id>: PASS|FAIL` line with its measured quantities and
//! runtime. Tolerances are pinned here and nowhere else; run with
//! `cargo test --test acceptance -- --nocapture` to see every line.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pblab::admissible::{trace_boundary_loop, HomotopyClass};
use pblab::dynamics::{find_chords, hamiltonian_flow};
use pblab::fields::{GridManifold, ScalarField, VectorMapField};
use pblab::geometry::{v, ConvexDomain, MarkedBoundary, Normalization, Vec2};
use pblab::maps::{certify_jacobian, pseudoretract};
use pblab::runner::{cmd_estimate, Overrides};
use pblab::sets::{rasterize_mask, SetConfig, SetShape};
use pblab::solver::{
    estimate_pb, estimate_pb3_fg, estimate_pb_class, gradient_check, theorem_check_limit,
    theorem_check_reduction, theorem_check_subhomogeneity, ObjectiveKind, SolveSchedule,
    TheoremReport,
};

fn verdict(id: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] {id}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{id}: {detail}");
}

fn val(report: &TheoremReport, key: &str) -> f64 {
    report
        .values
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, x)| *x)
        .unwrap_or_else(|| panic!("report lacks the value {key}"))
}

fn schedule() -> SolveSchedule {
    SolveSchedule {
        max_iterations: 400,
        plateau_window: 80,
        ..Default::default()
    }
}

// -- fixtures ---------------------------------------------------------------

fn torus_grid(nx: usize) -> Arc<GridManifold> {
    GridManifold::torus(0.0, 0.0, 2.0, 2.0, nx).unwrap()
}

fn arc(from_deg: f64, to_deg: f64, half_width: f64) -> Vec<SetShape> {
    let deg = PI / 180.0;
    vec![SetShape::CircleArc {
        center: v(1.0, 1.0),
        radius: 0.5,
        theta0: from_deg * deg,
        theta1: to_deg * deg,
        half_width,
    }]
}

/// Three overlapping quadrants of a thickened circle; the triple
/// intersection is empty while consecutive arcs share a short band.
fn three_arcs(nx: usize) -> SetConfig {
    let shapes = vec![
        arc(-15.0, 135.0, 0.1),
        arc(105.0, 255.0, 0.1),
        arc(225.0, 375.0, 0.1),
    ];
    SetConfig::rasterize(torus_grid(nx), &shapes).unwrap()
}

/// Same decomposition into four arcs; opposite arcs stay disjoint.
fn four_arcs(nx: usize) -> SetConfig {
    let shapes = vec![
        arc(-10.0, 100.0, 0.1),
        arc(80.0, 190.0, 0.1),
        arc(170.0, 280.0, 0.1),
        arc(260.0, 370.0, 0.1),
    ];
    SetConfig::rasterize(torus_grid(nx), &shapes).unwrap()
}

fn marks3() -> MarkedBoundary {
    let square = ConvexDomain::square(1.0).unwrap();
    MarkedBoundary::from_points(square, &[v(0.0, 1.0), v(0.5, 0.0), v(1.0, 1.0)]).unwrap()
}

fn marks4() -> MarkedBoundary {
    let square = ConvexDomain::square(1.0).unwrap();
    MarkedBoundary::from_points(
        square,
        &[v(0.0, 1.0), v(0.5, 0.0), v(1.0, 1.0), v(0.5, 1.0)],
    )
    .unwrap()
}

fn annulus_mask(grid: &Arc<GridManifold>, half_width: f64) -> Vec<bool> {
    rasterize_mask(
        grid,
        &[SetShape::CircleArc {
            center: v(1.0, 1.0),
            radius: 0.5,
            theta0: 0.0,
            theta1: TAU,
            half_width,
        }],
    )
    .unwrap()
}

fn winding_class(grid: &Arc<GridManifold>, mask: &[bool], winding: i64) -> HomotopyClass {
    HomotopyClass {
        loops: vec![trace_boundary_loop(grid, mask).unwrap()],
        windings: vec![winding],
    }
}

// -- 01: fold maps are certified area-bounded retractions -------------------

#[test]
fn folded_retracts_certify_their_jacobian_bounds() {
    let square = ConvexDomain::square(1.0).unwrap();
    let corners = [v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)];
    let mut detail = String::new();
    let mut pass = true;

    for (label, domain) in [
        ("disc", ConvexDomain::unit_disc(Normalization::UnitRadius)),
        ("square", square),
    ] {
        let t0 = Instant::now();
        let retract = pseudoretract(&domain, 0.1).unwrap();
        let cert = certify_jacobian(&retract.map, v(-2.0, -2.0), v(2.0, 2.0), 401, 0.02).unwrap();

        let step = 4.0 / 400.0;
        let mut exterior_defect: f64 = 0.0;
        let mut vertex_defect: f64 = 0.0;
        for i in 0..401 {
            for j in 0..401 {
                let q = v(-2.0 + i as f64 * step, -2.0 + j as f64 * step);
                if domain.contains(q, 0.0) {
                    continue;
                }
                let img = retract.map.apply(q).unwrap();
                exterior_defect = exterior_defect.max(domain.boundary_distance(img));
                if label == "square" {
                    // Outer quadrants are the corner sectors.
                    let sector = corners.iter().find(|c| {
                        (q.x - c.x) * (2.0 * c.x - 1.0) > 0.0
                            && (q.y - c.y) * (2.0 * c.y - 1.0) > 0.0
                    });
                    if let Some(c) = sector {
                        vertex_defect = vertex_defect.max(img.dist(*c));
                    }
                }
            }
        }
        let secs = t0.elapsed().as_secs_f64();

        let ok = retract.declared <= 1.1 + 1e-9
            && cert.ok
            && exterior_defect <= 1e-9
            && vertex_defect <= 1e-12
            && secs < 5.0;
        pass &= ok;
        detail.push_str(&format!(
            "{label}: declared {:.4}, measured {:.4}, exterior {:.1e}, vertex {:.1e}, {:.1}s; ",
            retract.declared, cert.measured, exterior_defect, vertex_defect, secs
        ));
    }
    verdict("01 pseudoretract-certification", pass, detail.trim_end());
}

// -- 02: the discrete bracket is a second-order oracle ----------------------

#[test]
fn discrete_bracket_matches_the_analytic_oracle_at_second_order() {
    let t0 = Instant::now();

    // (x^2, y) has bracket exactly 2x; the stencils reproduce quadratics, so
    // the defect must sit at rounding level, far below h^2.
    let grid = GridManifold::plane_box(-1.0, -1.0, 1.0, 1.0, 256).unwrap();
    let h = grid.h;
    let parabola = VectorMapField::from_fn(grid.clone(), |q| v(q.x * q.x, q.y));
    let bracket = parabola.bracket();
    let mut exact_err: f64 = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let q = grid.node(i, j);
            exact_err = exact_err.max((bracket.values()[j * grid.nx + i] - 2.0 * q.x).abs());
        }
    }

    // A curved pair with bracket 7 cos(x + 2y) sin(3x - y) exposes the
    // truncation order across two refinements.
    let mut errs = Vec::new();
    for nx in [64usize, 128, 256] {
        let g = GridManifold::plane_box(-1.0, -1.0, 1.0, 1.0, nx).unwrap();
        let phi = VectorMapField::from_fn(g.clone(), |q| {
            v((q.x + 2.0 * q.y).sin(), (3.0 * q.x - q.y).cos())
        });
        let b = phi.bracket();
        let mut worst: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let q = g.node(i, j);
                let truth = 7.0 * (q.x + 2.0 * q.y).cos() * (3.0 * q.x - q.y).sin();
                worst = worst.max((b.values()[j * g.nx + i] - truth).abs());
            }
        }
        errs.push((g.h, worst));
    }
    let orders: Vec<f64> = errs
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).log2() / (w[0].0 / w[1].0).log2())
        .collect();
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let bounded = errs.iter().all(|&(hh, e)| e <= 50.0 * hh * hh);
    let secs = t0.elapsed().as_secs_f64();

    let pass = exact_err <= h * h && bounded && min_order >= 1.8 && secs < 2.0;
    verdict(
        "02 bracket-oracle",
        pass,
        &format!(
            "quadratic defect {exact_err:.1e} (h^2 = {:.1e}), curved errors {:.2e}/{:.2e}/{:.2e}, orders {:.2}/{:.2}, {:.1}s",
            h * h,
            errs[0].1,
            errs[1].1,
            errs[2].1,
            orders[0],
            orders[1],
            secs
        ),
    );
}

// -- 03: post-composing with a retract keeps the bracket bounded ------------

#[test]
fn post_composition_with_a_retract_respects_the_bracket_bound() {
    let t0 = Instant::now();
    let disc = ConvexDomain::unit_disc(Normalization::UnitRadius);
    let retract = pseudoretract(&disc, 0.1).unwrap();
    let grid = GridManifold::plane_box(-2.0, -2.0, 2.0, 2.0, 256).unwrap();
    let h = grid.h;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_ratio: f64 = 0.0;
    let mut pass = true;
    for _ in 0..10 {
        let a: [f64; 8] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.5..2.0));
        let phi_fn = move |q: Vec2| {
            v(
                a[0] * (w[0] * q.x + a[1] * q.y).sin() + a[2] * (w[1] * q.y).cos(),
                a[3] * (w[2] * q.y + a[4] * q.x).sin()
                    + a[5] * (w[3] * q.x).cos()
                    + a[6] * q.x
                    + a[7] * q.y,
            )
        };
        let phi = VectorMapField::from_fn(grid.clone(), phi_fn);
        let map = &retract.map;
        let composed = VectorMapField::from_fn(grid.clone(), move |q| {
            map.apply(phi_fn(q)).expect("retracts are total")
        });
        let base = phi.bracket().sup_norm();
        let after = composed.bracket().sup_norm();
        let bound = 1.1 * base + 5.0 * h;
        pass &= after <= bound;
        worst_ratio = worst_ratio.max(after / bound);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = pass && secs < 30.0;
    verdict(
        "03 post-composition-bound",
        pass,
        &format!("10 random maps, worst (sup after)/(1.1 sup + 5h) = {worst_ratio:.3}, {secs:.1}s"),
    );
}

// -- 04: merging a pair of marked points is reversible within budget --------

#[test]
fn merging_and_restoring_a_four_arc_tuple_is_two_sided() {
    let t0 = Instant::now();
    let config = four_arcs(128);
    let sched = SolveSchedule {
        max_iterations: 1200,
        plateau_window: 240,
        ..Default::default()
    };
    let report = theorem_check_reduction(&config, &marks4(), &sched, 0.05, 0.01).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = report.all_pass() && secs < 600.0;
    verdict(
        "04 reduction-two-sided",
        pass,
        &format!(
            "e4 {:.4}, merged e3 {:.4}, pushed {:.4}, collapsed {:.4}, restored {:.4} vs budget {:.4} (c_rho {:.3}), {:.0}s",
            val(&report, "n_point"),
            val(&report, "merged"),
            val(&report, "pushed_sup"),
            val(&report, "collapsed_sup"),
            val(&report, "polished"),
            val(&report, "budget"),
            val(&report, "c_rho"),
            secs
        ),
    );
}

// -- 05: marked-domain and circle-valued forms estimate the same number -----

#[test]
fn marked_and_class_forms_agree_on_the_circle_decomposition() {
    let t0 = Instant::now();
    let sched = schedule();
    let mut gaps = Vec::new();
    let mut stats = Vec::new();
    for nx in [128usize, 256] {
        let config = three_arcs(nx);
        let grid = config.grid().clone();
        let marked = estimate_pb(&config, &marks3(), ObjectiveKind::Sup, &sched, None).unwrap();
        let union: Vec<bool> = (0..grid.len())
            .map(|i| config.mask(0)[i] || config.mask(1)[i] || config.mask(2)[i])
            .collect();
        let class = winding_class(&grid, &union, 1);
        let circle =
            estimate_pb_class(&grid, &union, &class, ObjectiveKind::Sup, &sched, None).unwrap();
        gaps.push((marked.value - circle.value).abs());
        stats.push((nx, marked.value, circle.value));
    }
    let secs = t0.elapsed().as_secs_f64();
    let rel = gaps[0] / stats[0].1.max(stats[0].2);
    let pass = rel <= 0.15 && gaps[1] < gaps[0] && secs < 900.0;
    verdict(
        "05 homotopical-consistency",
        pass,
        &format!(
            "128²: marked {:.4} vs class {:.4} (rel gap {:.1}%); 256²: {:.4} vs {:.4}; gap {:.4} -> {:.4}, {:.0}s",
            stats[0].1,
            stats[0].2,
            100.0 * rel,
            stats[1].1,
            stats[1].2,
            gaps[0],
            gaps[1],
            secs
        ),
    );
}

// -- 06: raising the class to a power scales the estimate at most k-fold ----

#[test]
fn powering_the_class_multiplies_the_estimate_at_most_k_fold() {
    let t0 = Instant::now();
    let grid = torus_grid(128);
    let mask = annulus_mask(&grid, 0.1);
    let class = winding_class(&grid, &mask, 1);
    let sched = schedule();
    let mut pass = true;
    let mut detail = String::new();
    for k in [2u32, 3] {
        let report =
            theorem_check_subhomogeneity(&grid, &mask, &class, k, &sched, 0.05).unwrap();
        let base = val(&report, "base");
        let lifted = val(&report, "lifted_sup");
        let scratch = val(&report, "scratch");
        let budget = k as f64 * (1.05 / 0.95) * base + 10.0 * grid.h;
        let ok = report.all_pass() && lifted <= budget && scratch <= budget;
        pass &= ok;
        detail.push_str(&format!(
            "k={k}: base {base:.4}, lifted {lifted:.4} and fresh {scratch:.4} vs {budget:.4}; "
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = pass && secs < 900.0;
    verdict(
        "06 subhomogeneity",
        pass,
        &format!("{detail}{secs:.0}s"),
    );
}

// -- 07: splitting along a shrinking neighborhood closes the gap ------------

#[test]
fn split_tuples_approach_the_three_set_value_as_the_neighborhood_shrinks() {
    let t0 = Instant::now();
    let config = three_arcs(128);
    let h = config.grid().h;
    let radii = [8.0 * h, 4.0 * h, 2.0 * h];
    let report =
        theorem_check_limit(&config, &marks3(), &marks4(), &radii, &schedule()).unwrap();
    let three = val(&report, "three_point");
    let final_gap = val(&report, "gap_2");
    let secs = t0.elapsed().as_secs_f64();
    let pass = report.all_pass() && final_gap < 0.2 * three && secs < 1200.0;
    verdict(
        "07 limit-trend",
        pass,
        &format!(
            "three-set {:.4}; gaps {:.4} / {:.4} / {:.4} at radii 8h/4h/2h (final {:.1}% of base), {:.0}s",
            three,
            val(&report, "gap_0"),
            val(&report, "gap_1"),
            final_gap,
            100.0 * final_gap / three,
            secs
        ),
    );
}

// -- 08: growing the set can only grow the estimate -------------------------

#[test]
fn nested_sets_give_monotone_estimates_under_witness_seeding() {
    let t0 = Instant::now();
    let grid = torus_grid(128);
    let sched = schedule();
    let wide = annulus_mask(&grid, 0.14);
    let mid = annulus_mask(&grid, 0.10);
    let thin = annulus_mask(&grid, 0.06);

    let e_wide = estimate_pb_class(
        &grid,
        &wide,
        &winding_class(&grid, &wide, 1),
        ObjectiveKind::Sup,
        &sched,
        None,
    )
    .unwrap();
    let e_mid = estimate_pb_class(
        &grid,
        &mid,
        &winding_class(&grid, &mid, 1),
        ObjectiveKind::Sup,
        &sched,
        Some(&e_wide.witness),
    )
    .unwrap();
    let e_thin = estimate_pb_class(
        &grid,
        &thin,
        &winding_class(&grid, &thin, 1),
        ObjectiveKind::Sup,
        &sched,
        Some(&e_mid.witness),
    )
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();

    let seeded = e_mid.warm_start_feasible && e_thin.warm_start_feasible;
    let pass = seeded
        && e_thin.value <= e_mid.value + 1e-6
        && e_mid.value <= e_wide.value + 1e-6
        && secs < 300.0;
    verdict(
        "08 monotonicity",
        pass,
        &format!(
            "thin {:.6} <= mid {:.6} <= wide {:.6} (+1e-6 each), seeds accepted: {seeded}, {:.0}s",
            e_thin.value, e_mid.value, e_wide.value, secs
        ),
    );
}

// -- 09: objective gradients agree with finite differences ------------------

#[test]
fn analytic_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let grid = GridManifold::torus(0.0, 0.0, 2.0, 2.0, 65).unwrap();
    let phi = VectorMapField::from_fn(grid, |q| {
        v(
            (PI * q.x).sin() * (0.7 * q.y).cos(),
            (PI * q.y).sin() + 0.3 * (2.1 * q.x).cos(),
        )
    });
    let err_sup = gradient_check(&phi, ObjectiveKind::Sup, 8.0, 10, 1e-5).unwrap();
    let err_max = gradient_check(&phi, ObjectiveKind::Max, 8.0, 10, 1e-5).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = err_sup < 1e-5 && err_max < 1e-5 && secs < 60.0;
    verdict(
        "09 gradient-check",
        pass,
        &format!("sup-form rel err {err_sup:.2e}, max-form rel err {err_max:.2e}, {secs:.1}s"),
    );
}

// -- 10: flows transit, conserve, and rescale as integrated -----------------

#[test]
fn flow_chords_and_conserved_quantities_behave() {
    let t0 = Instant::now();

    // A unit shear crosses the gap between two vertical strips in time d.
    let grid = GridManifold::plane_box(-0.25, -0.5, 1.25, 0.5, 151).unwrap();
    let h = grid.h;
    let dt = 0.01;
    let (col_a, col_b) = (45usize, 125usize);
    let strip = |col: usize| -> Vec<bool> {
        (0..grid.len())
            .map(|i| {
                let (ix, iy) = (i % grid.nx, i / grid.nx);
                ix == col && grid.node(ix, iy).y.abs() <= 0.25
            })
            .collect()
    };
    let d = (col_b - col_a) as f64 * h;
    let shear = ScalarField::from_fn(grid.clone(), |q| q.y);
    let report = find_chords(&shear, &strip(col_a), &strip(col_b), 0.9, dt, 1).unwrap();
    let shear_time = report.minimal_time.expect("the shear must connect the strips");
    let shear_ok = (shear_time - d).abs() <= 2.0 * dt;

    // The rescaled Hamiltonian G / (1 - delta) crosses in time (1 - delta) d.
    let delta = 0.25;
    let fast = ScalarField::from_fn(grid.clone(), move |q| q.y / (1.0 - delta));
    let fast_report = find_chords(&fast, &strip(col_a), &strip(col_b), 0.9, dt, 1).unwrap();
    let fast_time = fast_report.minimal_time.expect("the rescaled shear must connect");
    let rescale_ok = (fast_time - (1.0 - delta) * d).abs() <= 2.0 * dt;

    // A circular flow conserves the radius for a full period.
    let disc_grid = GridManifold::plane_box(-2.0, -2.0, 2.0, 2.0, 257).unwrap();
    let rotation = ScalarField::from_fn(disc_grid, |q| 0.5 * q.norm_sq());
    let orbit = hamiltonian_flow(&rotation, v(1.0, 0.0), TAU, 1e-3).unwrap();
    let drift = orbit
        .points
        .iter()
        .map(|p| (p.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let conserve_ok = drift < 1e-6;

    let secs = t0.elapsed().as_secs_f64();
    let pass = shear_ok && rescale_ok && conserve_ok && secs < 120.0;
    verdict(
        "10 dynamics",
        pass,
        &format!(
            "shear {shear_time:.3} vs d {d:.3}; rescaled {fast_time:.3} vs {:.3}; radius drift {drift:.1e}, {secs:.1}s",
            (1.0 - delta) * d
        ),
    );
}

// -- 11: the same config always produces the same bytes ---------------------

#[test]
fn repeated_runs_are_byte_identical() {
    let t0 = Instant::now();
    let config = r#"
[grid]
kind = "torus"
x0 = 0.0
y0 = 0.0
lx = 2.0
ly = 2.0
nx = 64

[[sets]]
shape = "rect"
lo = [0.15, 0.0]
hi = [0.45, 2.0]

[[sets]]
shape = "rect"
lo = [0.85, 0.0]
hi = [1.15, 2.0]

[[sets]]
shape = "rect"
lo = [1.55, 0.0]
hi = [1.85, 2.0]

[domain]
shape = "square"
side = 1.0

[marks]
points = [[0.0, 1.0], [0.5, 0.0], [1.0, 1.0]]

[invariant]
kind = "pb-n"

[schedule]
exponents = [8.0, 32.0]
max-iterations = 120
plateau-window = 40
"#;
    let run_a = tempfile::tempdir().unwrap();
    let run_b = tempfile::tempdir().unwrap();
    cmd_estimate(config, run_a.path(), &Overrides::default()).unwrap();
    cmd_estimate(config, run_b.path(), &Overrides::default()).unwrap();
    let mut identical = true;
    for artifact in ["estimate.json", "witness.bin", "bracket.csv"] {
        let a = std::fs::read(run_a.path().join(artifact)).unwrap();
        let b = std::fs::read(run_b.path().join(artifact)).unwrap();
        identical &= a == b;
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        "11 determinism",
        identical,
        &format!("estimate.json, witness.bin, bracket.csv byte-identical across two runs, {secs:.1}s"),
    );
}

// -- 12: the two-function and marked three-set forms cross-check ------------

#[test]
fn two_function_and_marked_three_set_forms_cross_check() {
    let t0 = Instant::now();
    let config = three_arcs(256);
    let grid = config.grid().clone();
    let sched = schedule();
    let marked = estimate_pb(&config, &marks3(), ObjectiveKind::Sup, &sched, None).unwrap();
    let half = marked.value / 2.0;
    let fg = estimate_pb3_fg(
        &grid,
        config.mask(0),
        config.mask(1),
        config.mask(2),
        &sched,
        None,
    )
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let rel = (fg.value - half).abs() / half.max(fg.value);
    let pass = rel <= 0.10 && secs < 900.0;
    verdict(
        "12 two-function-cross-check",
        pass,
        &format!(
            "half-marked {half:.4} vs two-function {:.4} (rel gap {:.1}%), {:.0}s",
            fg.value,
            100.0 * rel,
            secs
        ),
    );
}
