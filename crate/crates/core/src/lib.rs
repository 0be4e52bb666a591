//! Exact one-bit classical bounds for prepare-and-measure witness matrices,
//! qubit lower bounds, and certificates built from them.
//!
//! - [`matrix`]: integer and real matrices, text I/O, standard constructions
//! - [`norms`]: `L(M)`, `L_k(M)` and the cut norm, exact
//! - [`heuristics`]: see-saw lower bounds on `L_2`
//! - [`qgeom`]: Bloch vectors, correlation matrices, qubit lower bounds
//! - [`gisin`]: Monte Carlo of the one-bit Gisin-Gisin model
//! - [`gilbert`]: distance to the one-bit polytope, witness search
//! - [`certify`]: rigorous ratios and thresholds

pub mod certify;
pub mod error;
pub mod gilbert;
pub mod gisin;
pub mod heuristics;
pub mod matrix;
pub mod norms;
pub mod qgeom;

pub use error::{Error, Result};
pub use matrix::{RealMatrix, WitnessMatrix};
