//! Data-driven reduced-order modeling on spectral submanifolds (SSMs).
//!
//! From uniformly sampled decay trajectories this library fits a low-dimensional
//! invariant manifold (tangent space by truncated SVD, parametrization by
//! polynomial regression), extracts the reduced dynamics, computes a sparse
//! normal form by a recursive homological solver, and uses the resulting model
//! to predict free decay, backbone curves, and forced-response curves.

pub mod embed;
pub mod error;
pub mod manifold;
pub mod normal_form;
pub mod ode;
pub mod pipeline;
pub mod poly;
pub mod predict;
pub mod reduced;
pub mod synth;

pub use error::{Error, Result};
pub use num_complex::Complex64;
