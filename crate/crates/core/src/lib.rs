//! Kačanov iteration for scalar quasi-Newtonian flow problems.
//!
//! The crate is organised bottom-up:
//!
//! * [`viscosity`]: shear-thinning viscosity laws, their energy densities and
//!   structural constants.
//! * [`mesh`]: conforming triangulations of the L-shaped domain, uniform and
//!   graded refinement.
//! * [`fem`]: continuous P1 elements: gradients, weighted stiffness, loads,
//!   energies and error norms.
//! * [`linalg`]: CSR storage and preconditioned conjugate gradients.
//! * [`kacanov`]: the fixed-point driver and the contraction-factor monitors.

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fem;
pub mod kacanov;
pub mod linalg;
pub mod mesh;
pub mod viscosity;

pub use error::{Error, Result};
