//! Numerical laboratory for a viscoelastic wave equation on a ball.
//!
//! The model is a radial wave equation with a memory convolution against a
//! relaxation kernel, weak frictional damping with a singular radial weight,
//! and a polynomial source. The crate provides the full experiment pipeline:
//! kernel certification, cell-centered radial discretization, energy and
//! Levine functionals, potential-well constants by constrained optimization,
//! an adaptive leapfrog integrator with full history, and post-hoc decay and
//! blow-up analysis.

pub mod analysis;
pub mod error;
pub mod fields;
pub mod functionals;
pub mod kernel;
pub mod mesh;
pub mod mms;
pub mod problem;
pub mod solver;
pub mod well;

pub use error::{Error, Result};
