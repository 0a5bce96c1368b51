//! Config-driven runs: a strict TOML description selects the fixture and the
//! computation, and each command writes deterministic artifacts (JSON with
//! tool version, config hash, and grid metadata; witness binaries; CSV plot
//! data). Commands are pure functions of the config text plus the explicit
//! overrides, so repeated runs produce byte-identical files.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admissible::{trace_boundary_loop, HomotopyClass};
use crate::dynamics::{find_chords, side_conditions, ChordReport, SideConditions};
use crate::error::Error;
use crate::fields::{GridManifold, ScalarField};
use crate::geometry::{v, ConvexDomain, MarkedBoundary, Normalization, Vec2};
use crate::maps::{certify_jacobian, pseudoretract, JacobianCertificate, PlanarMap};
use crate::profile::smoothstep3;
use crate::sets::{rasterize_mask, SetConfig, SetShape};
use crate::solver::{
    estimate_pb, estimate_pb3_fg, estimate_pb_class, theorem_check_limit,
    theorem_check_reduction, theorem_check_subhomogeneity, ObjectiveKind, PbEstimate,
    SolveSchedule, TheoremReport,
};
use crate::Result;

// ---------------------------------------------------------------------------
// Config schema. Unknown keys are rejected everywhere.

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub sets: Vec<SetSpec>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub marks: Option<MarkSpec>,
    #[serde(default)]
    pub invariant: Option<InvariantSpec>,
    #[serde(default)]
    pub schedule: SolveSchedule,
    #[serde(default)]
    pub class: Option<ClassSpec>,
    #[serde(default)]
    pub certify: Option<CertifySpec>,
    #[serde(default)]
    pub chords: Option<ChordSpec>,
    #[serde(default)]
    pub theorems: Vec<TheoremSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum GridSpec {
    Torus { x0: f64, y0: f64, lx: f64, ly: f64, nx: usize },
    PlaneBox { x0: f64, y0: f64, x1: f64, y1: f64, nx: usize },
}

impl GridSpec {
    fn build(&self, nx_override: Option<usize>) -> Result<Arc<GridManifold>> {
        let res = match *self {
            GridSpec::Torus { x0, y0, lx, ly, nx } => {
                GridManifold::torus(x0, y0, lx, ly, nx_override.unwrap_or(nx))
            }
            GridSpec::PlaneBox { x0, y0, x1, y1, nx } => {
                GridManifold::plane_box(x0, y0, x1, y1, nx_override.unwrap_or(nx))
            }
        };
        res.map_err(|e| Error::Config(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "shape")]
pub enum SetSpec {
    Disc {
        center: [f64; 2],
        radius: f64,
    },
    Rect {
        lo: [f64; 2],
        hi: [f64; 2],
    },
    /// Thickened circle arc swept counter-clockwise between two angles
    /// given in degrees.
    Band {
        center: [f64; 2],
        radius: f64,
        from_deg: f64,
        to_deg: f64,
        half_width: f64,
    },
    Capsule {
        points: Vec<[f64; 2]>,
        half_width: f64,
    },
}

impl SetSpec {
    fn shape(&self) -> SetShape {
        let deg = std::f64::consts::PI / 180.0;
        match self {
            SetSpec::Disc { center, radius } => SetShape::Disc {
                center: v(center[0], center[1]),
                radius: *radius,
            },
            SetSpec::Rect { lo, hi } => SetShape::Rect {
                lo: v(lo[0], lo[1]),
                hi: v(hi[0], hi[1]),
            },
            SetSpec::Band {
                center,
                radius,
                from_deg,
                to_deg,
                half_width,
            } => SetShape::CircleArc {
                center: v(center[0], center[1]),
                radius: *radius,
                theta0: from_deg * deg,
                theta1: to_deg * deg,
                half_width: *half_width,
            },
            SetSpec::Capsule { points, half_width } => SetShape::Polyline {
                points: points.iter().map(|p| v(p[0], p[1])).collect(),
                half_width: *half_width,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "shape")]
pub enum DomainSpec {
    Square { side: f64 },
    Disc { normalization: Normalization },
    RightTriangle { leg: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl DomainSpec {
    fn build(&self) -> Result<ConvexDomain> {
        let dom = match self {
            DomainSpec::Square { side } => ConvexDomain::square(*side),
            DomainSpec::Disc { normalization } => Ok(ConvexDomain::unit_disc(*normalization)),
            DomainSpec::RightTriangle { leg } => ConvexDomain::right_triangle(*leg),
            DomainSpec::Polygon { vertices } => {
                ConvexDomain::polygon(vertices.iter().map(|p| v(p[0], p[1])).collect())
            }
        };
        dom.map_err(|e| Error::Config(format!("domain: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkSpec {
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSpec {
    pub kind: RunKind,
    #[serde(default)]
    pub objective: Option<ObjectiveKind>,
}

/// Which estimator a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    /// Marked-domain form over the set tuple.
    PbN,
    /// Circle-valued class form over one set.
    PbAlpha,
    /// Two-function form of the three-set invariant.
    Pb3Fg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    /// Index into `sets` of the constrained set.
    pub set: usize,
    /// Winding demanded on the traced boundary loop of that set.
    pub winding: i64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "map")]
pub enum CertifySpec {
    Identity {
        region: [f64; 4],
        n: usize,
    },
    /// Pseudoretract of the `[domain]` section at the given collar budget.
    Pseudoretract {
        eps: f64,
        region: [f64; 4],
        n: usize,
        /// Overrides the map's own declared bound when present.
        #[serde(default)]
        declared: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ChordSpec {
    pub g: HamiltonianSpec,
    pub a_set: usize,
    pub b_set: usize,
    pub p: f64,
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Optional sign-condition report: the set that must see `G <= 0`.
    #[serde(default)]
    pub side_second: Option<usize>,
    /// Optional sign-condition report: the two sets whose intersection must
    /// see `G >= 1`.
    #[serde(default)]
    pub side_core: Option<[usize; 2]>,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum HamiltonianSpec {
    /// `G = y`.
    Shear,
    /// `G = omega (x^2 + y^2) / 2` about a center.
    Rotation { center: [f64; 2], omega: f64 },
    /// `G = y^2/2 + a (1 - cos x)`.
    Pendulum { a: f64 },
    /// Radial plateau: `height` inside, 0 beyond `radius`.
    Bump {
        center: [f64; 2],
        radius: f64,
        height: f64,
    },
    /// `factor * base`; the corollary's `G / (1 - delta)` device.
    Scaled {
        base: Box<HamiltonianSpec>,
        factor: f64,
    },
}

impl HamiltonianSpec {
    fn build(&self, grid: &Arc<GridManifold>) -> ScalarField {
        match self {
            HamiltonianSpec::Shear => ScalarField::from_fn(grid.clone(), |q| q.y),
            HamiltonianSpec::Rotation { center, omega } => {
                let c = v(center[0], center[1]);
                let w = *omega;
                ScalarField::from_fn(grid.clone(), move |q| 0.5 * w * (q - c).norm_sq())
            }
            HamiltonianSpec::Pendulum { a } => {
                let a = *a;
                ScalarField::from_fn(grid.clone(), move |q| {
                    0.5 * q.y * q.y + a * (1.0 - q.x.cos())
                })
            }
            HamiltonianSpec::Bump {
                center,
                radius,
                height,
            } => {
                let c = v(center[0], center[1]);
                let (r, h) = (*radius, *height);
                ScalarField::from_fn(grid.clone(), move |q| {
                    h * (1.0 - smoothstep3(q.dist(c) / r))
                })
            }
            HamiltonianSpec::Scaled { base, factor } => {
                let inner = base.build(grid);
                let vals = inner.values().iter().map(|&x| factor * x).collect();
                ScalarField::from_values(grid.clone(), vals)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "check")]
pub enum TheoremSpec {
    /// Merge the last two sets and verify both directions of the reduction.
    Reduction { name: String, eps: f64, delta: f64 },
    /// Split the three-set tuple along shrinking neighborhoods of X1 ∩ X3;
    /// radii are in grid-step units, marks4 holds the four-marked boundary.
    Limit {
        name: String,
        radii_h: Vec<f64>,
        marks4: Vec<[f64; 2]>,
    },
    /// Multiply the class and verify the k-fold budget.
    Subhomogeneity { name: String, k: u32, eps: f64 },
}

// ---------------------------------------------------------------------------
// Artifact envelopes.

const TOOL_NAME: &str = "pblab";
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
struct ToolMeta {
    name: &'static str,
    version: &'static str,
}

fn tool_meta() -> ToolMeta {
    ToolMeta {
        name: TOOL_NAME,
        version: TOOL_VERSION,
    }
}

#[derive(Debug, Clone, Serialize)]
struct GridMeta {
    kind: &'static str,
    nx: usize,
    ny: usize,
    h: f64,
    x0: f64,
    y0: f64,
}

fn grid_meta(grid: &GridManifold) -> GridMeta {
    let (lo, _) = grid.extent();
    GridMeta {
        kind: if grid.is_wrapping() { "torus" } else { "plane-box" },
        nx: grid.nx,
        ny: grid.ny,
        h: grid.h,
        x0: lo.x,
        y0: lo.y,
    }
}

#[derive(Serialize)]
struct EstimateArtifact<'a> {
    tool: ToolMeta,
    config_sha256: &'a str,
    grid: GridMeta,
    estimate: &'a PbEstimate,
}

#[derive(Serialize)]
struct CertifyArtifact<'a> {
    tool: ToolMeta,
    config_sha256: &'a str,
    grid: GridMeta,
    certificate: &'a JacobianCertificate,
}

#[derive(Serialize)]
struct TheoremsArtifact<'a> {
    tool: ToolMeta,
    config_sha256: &'a str,
    grid: GridMeta,
    reports: &'a [TheoremReport],
}

#[derive(Serialize)]
struct ChordsArtifact<'a> {
    tool: ToolMeta,
    config_sha256: &'a str,
    grid: GridMeta,
    report: &'a ChordReport,
    side: &'a Option<SideConditions>,
}

// ---------------------------------------------------------------------------
// Shared plumbing.

/// Flag values that override the config: `--seed`, `--grid-override`,
/// `--objective`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_nx: Option<usize>,
    pub objective: Option<ObjectiveKind>,
}

/// What a command produced: a process exit code and a one-line summary.
#[derive(Debug, Clone)]
pub struct CmdOutcome {
    pub exit: i32,
    pub summary: String,
}

fn parse(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("config rejected: {e}")))
}

fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn build_sets(cfg: &RunConfig, grid: &Arc<GridManifold>) -> Result<SetConfig> {
    if cfg.sets.is_empty() {
        return Err(Error::Config("no [[sets]] entries".into()));
    }
    let shapes: Vec<Vec<SetShape>> = cfg.sets.iter().map(|s| vec![s.shape()]).collect();
    SetConfig::rasterize(grid.clone(), &shapes).map_err(|e| Error::Config(format!("sets: {e}")))
}

fn build_masks(cfg: &RunConfig, grid: &Arc<GridManifold>) -> Result<Vec<Vec<bool>>> {
    if cfg.sets.is_empty() {
        return Err(Error::Config("no [[sets]] entries".into()));
    }
    cfg.sets
        .iter()
        .map(|s| rasterize_mask(grid, &[s.shape()]).map_err(|e| Error::Config(format!("sets: {e}"))))
        .collect()
}

fn build_marks(cfg: &RunConfig) -> Result<MarkedBoundary> {
    let domain = cfg
        .domain
        .as_ref()
        .ok_or_else(|| Error::Config("missing [domain] for a marked run".into()))?
        .build()?;
    let marks = cfg.marks.as_ref().ok_or_else(|| {
        Error::Config("missing `marked_points`: add a [marks] section with `points` or `fractions`".into())
    })?;
    let mb = match (&marks.points, &marks.fractions) {
        (Some(pts), None) => {
            let pts: Vec<Vec2> = pts.iter().map(|p| v(p[0], p[1])).collect();
            MarkedBoundary::from_points(domain, &pts)
        }
        (None, Some(fr)) => MarkedBoundary::from_fractions(domain, fr),
        _ => {
            return Err(Error::Config(
                "marks need exactly one of `points` or `fractions`".into(),
            ))
        }
    };
    mb.map_err(|e| Error::Config(format!("marks: {e}")))
}

fn build_class(cfg: &RunConfig, sets: &SetConfig) -> Result<(Vec<bool>, HomotopyClass)> {
    let spec = cfg
        .class
        .as_ref()
        .ok_or_else(|| Error::Config("missing [class] for a class-form run".into()))?;
    if spec.set >= sets.n() {
        return Err(Error::Config(format!(
            "class set index {} out of range ({} sets)",
            spec.set,
            sets.n()
        )));
    }
    let mask = sets.mask(spec.set).to_vec();
    let lp = trace_boundary_loop(sets.grid(), &mask)
        .map_err(|e| Error::Config(format!("class: {e}")))?;
    Ok((
        mask,
        HomotopyClass {
            loops: vec![lp],
            windings: vec![spec.winding],
        },
    ))
}

fn apply_overrides(cfg: &RunConfig, ov: &Overrides) -> SolveSchedule {
    let mut schedule = cfg.schedule.clone();
    if let Some(seed) = ov.seed {
        schedule.seed = Some(seed);
    }
    schedule
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands.

/// Runs the configured estimator and writes `estimate.json`, `witness.bin`,
/// and `bracket.csv` into `out_dir`.
pub fn cmd_estimate(config_text: &str, out_dir: &Path, ov: &Overrides) -> Result<CmdOutcome> {
    let cfg = parse(config_text)?;
    let hash = sha256_hex(config_text);
    let grid = cfg.grid.build(ov.grid_nx)?;
    let inv = cfg
        .invariant
        .ok_or_else(|| Error::Config("missing [invariant]".into()))?;
    let schedule = apply_overrides(&cfg, ov);
    let objective = ov.objective.or(inv.objective).unwrap_or(ObjectiveKind::Sup);

    let mut estimate = match inv.kind {
        RunKind::PbN => {
            let sets = build_sets(&cfg, &grid)?;
            let mb = build_marks(&cfg)?;
            estimate_pb(&sets, &mb, objective, &schedule, None)?
        }
        RunKind::PbAlpha => {
            let sets = build_sets(&cfg, &grid)?;
            let (mask, class) = build_class(&cfg, &sets)?;
            estimate_pb_class(&grid, &mask, &class, objective, &schedule, None)?
        }
        RunKind::Pb3Fg => {
            let sets = build_sets(&cfg, &grid)?;
            if sets.n() != 3 {
                return Err(Error::Config(format!(
                    "the two-function form needs exactly 3 sets, got {}",
                    sets.n()
                )));
            }
            if objective != ObjectiveKind::Sup {
                return Err(Error::Config(
                    "the two-function form only supports the sup objective".into(),
                ));
            }
            estimate_pb3_fg(&grid, sets.mask(0), sets.mask(1), sets.mask(2), &schedule, None)?
        }
    };

    fs::create_dir_all(out_dir)?;
    estimate.witness_ref = Some("witness.bin".into());
    estimate
        .witness
        .write_binary(fs::File::create(out_dir.join("witness.bin"))?)?;
    estimate
        .witness
        .bracket()
        .write_csv(fs::File::create(out_dir.join("bracket.csv"))?)?;
    write_json(
        &out_dir.join("estimate.json"),
        &EstimateArtifact {
            tool: tool_meta(),
            config_sha256: &hash,
            grid: grid_meta(&grid),
            estimate: &estimate,
        },
    )?;
    Ok(CmdOutcome {
        exit: 0,
        summary: format!(
            "estimate {:.6e} from {} candidates on {}x{}",
            estimate.value, estimate.candidates, grid.nx, grid.ny
        ),
    })
}

/// Certifies the Jacobian bound of the configured map over its region and
/// writes `certificate.json`. Exit 1 when the measured maximum exceeds the
/// declared bound, with the argmax in the summary.
pub fn cmd_certify(config_text: &str, out_dir: &Path, ov: &Overrides) -> Result<CmdOutcome> {
    let cfg = parse(config_text)?;
    let hash = sha256_hex(config_text);
    let grid = cfg.grid.build(ov.grid_nx)?;
    let spec = cfg
        .certify
        .clone()
        .ok_or_else(|| Error::Config("missing [certify]".into()))?;
    let (map, declared_override, region, n) = match spec {
        CertifySpec::Identity { region, n } => (PlanarMap::identity(), None, region, n),
        CertifySpec::Pseudoretract {
            eps,
            region,
            n,
            declared,
        } => {
            let domain = cfg
                .domain
                .as_ref()
                .ok_or_else(|| Error::Config("missing [domain] for the pseudoretract".into()))?
                .build()?;
            let pr = pseudoretract(&domain, eps)?;
            (pr.map, declared, region, n)
        }
    };
    let mut cert = certify_jacobian(&map, v(region[0], region[1]), v(region[2], region[3]), n, 0.02)?;
    if let Some(d) = declared_override {
        cert.declared = d;
        cert.ok = cert.measured <= d + cert.tol;
    }
    fs::create_dir_all(out_dir)?;
    write_json(
        &out_dir.join("certificate.json"),
        &CertifyArtifact {
            tool: tool_meta(),
            config_sha256: &hash,
            grid: grid_meta(&grid),
            certificate: &cert,
        },
    )?;
    let summary = if cert.ok {
        format!(
            "jacobian bound holds: measured {:.6} <= declared {:.6} + {:.2}",
            cert.measured, cert.declared, cert.tol
        )
    } else {
        format!(
            "jacobian bound violated: measured {:.6} > declared {:.6} + {:.2} at ({:.4}, {:.4})",
            cert.measured, cert.declared, cert.tol, cert.argmax.x, cert.argmax.y
        )
    };
    Ok(CmdOutcome {
        exit: if cert.ok { 0 } else { 1 },
        summary,
    })
}

/// Runs every configured theorem check and writes `theorems.csv` (one row
/// per verified inequality) plus `theorems.json`. Exit 1 iff any line fails;
/// an empty suite passes with an empty table.
pub fn cmd_theorems(config_text: &str, out_dir: &Path, ov: &Overrides) -> Result<CmdOutcome> {
    let cfg = parse(config_text)?;
    let hash = sha256_hex(config_text);
    let grid = cfg.grid.build(ov.grid_nx)?;
    let schedule = apply_overrides(&cfg, ov);
    let mut reports: Vec<(String, TheoremReport)> = Vec::new();
    for spec in &cfg.theorems {
        let report = match spec {
            TheoremSpec::Reduction { name, eps, delta } => {
                let sets = build_sets(&cfg, &grid)?;
                let mb = build_marks(&cfg)?;
                (name.clone(), theorem_check_reduction(&sets, &mb, &schedule, *eps, *delta)?)
            }
            TheoremSpec::Limit {
                name,
                radii_h,
                marks4,
            } => {
                let sets = build_sets(&cfg, &grid)?;
                let mb3 = build_marks(&cfg)?;
                let pts: Vec<Vec2> = marks4.iter().map(|p| v(p[0], p[1])).collect();
                let mb4 = MarkedBoundary::from_points(mb3.domain().clone(), &pts)
                    .map_err(|e| Error::Config(format!("marks4: {e}")))?;
                let radii: Vec<f64> = radii_h.iter().map(|r| r * grid.h).collect();
                (name.clone(), theorem_check_limit(&sets, &mb3, &mb4, &radii, &schedule)?)
            }
            TheoremSpec::Subhomogeneity { name, k, eps } => {
                let sets = build_sets(&cfg, &grid)?;
                let (mask, class) = build_class(&cfg, &sets)?;
                (
                    name.clone(),
                    theorem_check_subhomogeneity(&grid, &mask, &class, *k, &schedule, *eps)?,
                )
            }
        };
        reports.push(report);
    }

    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("name,theorem,line,lhs,rhs,slack,verdict\n");
    let mut failures = 0usize;
    let mut total = 0usize;
    for (name, report) in &reports {
        for l in &report.lines {
            total += 1;
            if !l.pass {
                failures += 1;
            }
            csv.push_str(&format!(
                "{},{},{},{:.9e},{:.9e},{:.9e},{}\n",
                name,
                report.theorem,
                l.name,
                l.lhs,
                l.rhs,
                l.rhs - l.lhs,
                if l.pass { "pass" } else { "FAIL" }
            ));
        }
    }
    fs::write(out_dir.join("theorems.csv"), &csv)?;
    let plain: Vec<TheoremReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    write_json(
        &out_dir.join("theorems.json"),
        &TheoremsArtifact {
            tool: tool_meta(),
            config_sha256: &hash,
            grid: grid_meta(&grid),
            reports: &plain,
        },
    )?;
    Ok(CmdOutcome {
        exit: if failures == 0 { 0 } else { 1 },
        summary: format!("{} checks, {} lines, {} failures", reports.len(), total, failures),
    })
}

/// Runs the configured chord search and writes `chords.json`. An empty
/// report is a success.
pub fn cmd_chords(config_text: &str, out_dir: &Path, ov: &Overrides) -> Result<CmdOutcome> {
    let cfg = parse(config_text)?;
    let hash = sha256_hex(config_text);
    let grid = cfg.grid.build(ov.grid_nx)?;
    let spec = cfg
        .chords
        .clone()
        .ok_or_else(|| Error::Config("missing [chords]".into()))?;
    let masks = build_masks(&cfg, &grid)?;
    for (label, idx) in [("a_set", spec.a_set), ("b_set", spec.b_set)] {
        if idx >= masks.len() {
            return Err(Error::Config(format!(
                "{label} index {idx} out of range ({} sets)",
                masks.len()
            )));
        }
    }
    let g = spec.g.build(&grid);
    let report = find_chords(
        &g,
        &masks[spec.a_set],
        &masks[spec.b_set],
        spec.p,
        spec.dt,
        spec.stride,
    )?;
    let side = match (spec.side_second, spec.side_core) {
        (Some(second), Some([i, j])) => {
            for idx in [second, i, j] {
                if idx >= masks.len() {
                    return Err(Error::Config(format!(
                        "side-condition set index {idx} out of range"
                    )));
                }
            }
            let core: Vec<bool> = (0..grid.len())
                .map(|k| masks[i][k] && masks[j][k])
                .collect();
            Some(side_conditions(&g, &masks[second], &core)?)
        }
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "side conditions need both `side-second` and `side-core`".into(),
            ))
        }
    };
    fs::create_dir_all(out_dir)?;
    write_json(
        &out_dir.join("chords.json"),
        &ChordsArtifact {
            tool: tool_meta(),
            config_sha256: &hash,
            grid: grid_meta(&grid),
            report: &report,
            side: &side,
        },
    )?;
    let summary = match report.minimal_time {
        Some(t) => format!("{} chords, minimal time {t:.4}", report.chords.len()),
        None => "no chords observed".to_string(),
    };
    Ok(CmdOutcome { exit: 0, summary })
}
