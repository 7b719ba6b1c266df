//! Phase retrieval for partially coherent observations.
//!
//! The library solves magnitude-only inverse problems `|A x| = |b|` in which
//! small subsets of the observations are captured coherently, so that phase
//! differences within each subset are known while phases between subsets are
//! not. The extra information turns a hard non-convex problem into one that
//! admits two *linear* null-space formulations:
//!
//! * the Q-system over the original unknowns `x`, stacking
//!   `B_c A_1 - B_1 A_c`, and
//! * the R-system over the reduced phase vector `psi`, built from the range
//!   projector of `A`.
//!
//! Both are solved by extracting the unique non-trivial kernel vector via the
//! smallest singular value. Alongside them the crate provides the classical
//! non-convex cost functionals (magnitude-only, phase-constrained, reduced,
//! eliminated-phase and a four-block comparison functional), a limited-memory
//! quasi-Newton minimizer with spectral initialization, a Monte-Carlo
//! experiment harness with CSV output, and a synthetic antenna near-field
//! scenario generator.
//!
//! See the guide in `book/` for worked examples, or start with
//! [`model::ForwardOperator`] and [`linear::solve_r`].

pub mod antenna;
pub mod cplx1;
mod error;
pub mod experiments;
mod linalg;
pub mod linear;
pub mod model;
pub mod nonlinear;

pub use error::{Error, Result};

/// Complex scalar used throughout: double-precision `a + jb`.
pub type C64 = num_complex::Complex64;

/// Dense column-major complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Dense real column vector.
pub type RVector = nalgebra::DVector<f64>;
