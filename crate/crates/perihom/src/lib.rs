//! Periodic homogenization of a two-phase diffusion problem with an
//! interfacial flux jump.
//!
//! The micro model lives on the unit square tiled by ε-scaled copies of a
//! unit cell Y = (0,1)². Each cell is split into a matrix phase Y₁ and a
//! strictly interior inclusion Y₂ separated by the interface Σ. Diffusion
//! coefficients jump across Σ, the temperature stays continuous, and the
//! normal flux jumps by a prescribed ε-scaled density γ. As ε → 0 the
//! oscillating solutions converge to the solution of a constant-coefficient
//! problem whose tensor is computed from periodic cell problems and whose
//! source picks up an extra term from the flux jump.
//!
//! The crate is organized along that pipeline:
//!
//! * [`geometry`] — unit-cell phase layout, interface facets, ε-tilings;
//! * [`coeffs`] / [`expr`] — coefficient fields and the fixed catalog of
//!   source expressions;
//! * [`fem`] — Q1 finite elements on structured grids: fields, DOF maps,
//!   assembly of stiffness and load vectors;
//! * [`solver`] — sparse CG with Jacobi preconditioning and an optional
//!   zero-mean constraint for the singular periodic systems;
//! * [`homogenize`] — cell problems, the effective tensor, and the
//!   effective source;
//! * [`problems`] — the ε-scale solve, the homogenized solve, corrector
//!   reconstruction, and error metrics;
//! * [`harness`] — ε-sweeps, two-scale limit checks, and report emission;
//! * [`config`] / [`cli`] — the JSON run configuration and the command-line
//!   front end.

pub mod cli;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod expr;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod homogenize;
pub mod parallel;
pub mod problems;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
