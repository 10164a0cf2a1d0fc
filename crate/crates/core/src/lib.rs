//! Finite-difference solver for the two-species Poisson-Nernst-Planck system
//! on periodic staggered grids.
//!
//! The time integrator treats the mobility explicitly and the chemical
//! potentials implicitly, which keeps both concentrations strictly positive
//! and the discrete free energy non-increasing for any time step. Each step
//! is solved by a relaxed linearized fixed-point iteration whose inner
//! systems are symmetric positive definite.

pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod mms;
pub mod run;
pub mod scheme;
pub mod snapshot;

pub use error::{PnpError, Result};
pub use grid::{CellField, FaceField, Grid};
