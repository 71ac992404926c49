//! Eigenvalue bounds for non-selfadjoint Schrödinger operators `−Δ + V` on
//! three-space, and numerical machinery to test them: Nyström discretization
//! of the Birman–Schwinger operator, its Fredholm determinant, contour-based
//! zero counting, and a partial-wave oracle for radial potentials.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Node and weight
// tables keep their published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod fredholm;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod par;
pub mod potential;
pub mod quadrature;
pub mod scalarbounds;
pub mod verify;
pub mod zerocount;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use potential::{DecayClass, Potential, PotentialFunctionals, PotentialSpec, Shape};
pub use quadrature::QuadSpec;
pub use scalarbounds::{BoundKind, BoundMode, BoundParameters, BoundReport};
