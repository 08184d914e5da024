//! Bubble-enriched variational multiscale finite elements for the 2D
//! incompressible Navier–Stokes equations on linear triangles.
//!
//! Two nonlinear strategies share one mesh and DOF layer:
//! [`newton`] (consistent tangent with element-level static condensation of
//! the bubble coefficients) and [`fixed_point`] (iteration on a linearized
//! problem stabilized by an element tensor `τ`). [`solver`] drives both,
//! and [`harness`] provides the benchmark problems and diagnostics.

pub mod error;
pub mod fem;
pub mod fixed_point;
pub mod harness;
pub mod linear;
pub mod mesh;
pub mod newton;
pub mod problem;
pub mod solver;

mod element;

pub use error::{Error, Result};
pub use mesh::{BoundaryConditions, DofMap, Mesh, Point, VectorField};
pub use newton::State;
pub use problem::Problem;
pub use solver::{IterationReport, SolverConfig, Strategy};
