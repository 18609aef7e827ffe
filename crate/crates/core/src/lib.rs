//! Subspace-weighted matrix completion.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical piece
//! of the toolkit:
//!
//! - [`linalg`]: the scalar abstraction, a deterministic SVD and matrix norms.
//! - [`random`]: seeded random sources, Gaussian matrices and Haar factors.
//! - [`subspace`]: prior subspaces `T` of matrices, their projectors and the
//!   subspace incoherence parameters `M0`, `M1`.
//! - [`incoherence`]: per-matrix incoherence (`mu0`, `mu1`, `mu2`, ...) and
//!   principal angles between column spaces.
//! - [`sampling`]: entry sampling with and without replacement.
//! - [`solver`]: nuclear norm and weighted nuclear norm minimization.
//! - [`certify`]: dual certificate and concentration diagnostics.
//!
//! IO, file formats, the experiment harness and the command line live in the
//! companion `wmc` crate.
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod certify;
pub mod error;
pub mod incoherence;
pub mod linalg;
pub mod random;
pub mod sampling;
pub mod solver;
pub mod subspace;

pub use error::{Error, Result};
pub use linalg::{Field, Mat, SvdResult};
pub use sampling::SampleSet;
pub use subspace::{Subspace, SubspaceKind};

/// Complex double precision scalar.
pub type C64 = nalgebra::Complex<f64>;
