//! Numerical laboratory for Poisson bracket invariants of tuples of planar sets.
//!
//! The library estimates the invariants from above by minimizing the sup norm
//! of the discrete Poisson bracket over admissible grid maps, and certifies
//! structural reductions between configurations (merging marked points,
//! splitting a set along a separating neighborhood, multiplying a homotopy
//! class) with explicit area-distortion-bounded plane maps.
//!
//! Module map:
//! - [`geometry`]: convex target domains, marked boundaries, arc bookkeeping
//! - [`profile`]: monotone C^1 radial profiles shared by all retraction maps
//! - [`maps`]: pseudoretracts, folds, homotheties, composition, certification
//! - [`fields`]: grids, scalar/map fields, the discrete bracket
//! - [`sets`]: rasterized set tuples, dilation, Hausdorff distance, surgery
//! - [`admissible`]: admissibility checks, winding numbers, initial maps
//! - [`pipelines`]: certified witness transformations between configurations
//! - [`solver`]: minimax descent producing certified estimates
//! - [`dynamics`]: Hamiltonian flow and chord detection
//! - [`runner`]: config-driven runs and artifact output used by the CLI

pub mod admissible;
pub mod dist;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod maps;
pub mod pipelines;
pub mod profile;
pub mod runner;
pub mod sets;
pub mod solver;

pub use error::Error;

/// Library result alias.
pub type Result<T> = std::result::Result<T, Error>;
