//! Desk-scale numerical laboratory for truncation variation of singular
//! integrals, dyadic stopping-time constructions, sparse cube families with
//! convex-body averages, and matrix Muckenhoupt weights.
//!
//! Everything operates on piecewise-constant signals over a power-of-two grid
//! on a root cube, in dimension 1 or 2, with vector values in dimension 1 to 3.
//! Cell sums are exact, so the certificates produced by the stopping-time and
//! sparsity checks are exact integer statements, not float heuristics.

pub mod body;
pub mod czdecomp;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod lp;
pub mod sparse;
pub mod variation;
pub mod weights;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
