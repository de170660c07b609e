//! Greedy endmember extraction for linear-quadratic (LQ) near-separable
//! hyperspectral mixtures.
//!
//! A pixel spectrum `x` is modelled as a nonnegative combination of the
//! endmembers `w_1..w_r` *and* their pairwise Hadamard products
//! `w_j ⊙ w_i` (the "virtual" endmembers), with the coefficient vector in
//! `Δ = {h >= 0, sum(h) <= 1}`. When every true endmember appears as a pure
//! pixel, [`extraction::snpalq_extract`] recovers them by repeatedly picking
//! the pixel with the largest residual and re-projecting every pixel onto the
//! hull spanned by the origin, the picked pixels and their products.
//!
//! Modules:
//! - [`lq_model`]: dictionary expansion, synthetic scene generation, separability check.
//! - [`simplex_solver`]: least squares over `Δ` (accelerated projected gradient) plus an exact oracle.
//! - [`extraction`]: SPA, SNPA and SNPALQ.
//! - [`evaluation`]: the θ separation metric and the Monte-Carlo benchmark.
//! - [`data_io`]: CSV matrices, spectral libraries, scene bundles.
//! - [`cli`]: the `snpalq` command line front end.
//!
//! Indices are 0-based throughout the library. Files written for users
//! (`K.csv`, `meta.json`, `validate` output) use 1-based indices.

pub mod cli;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod lq_model;
pub mod simplex_solver;

pub use error::{Error, Result};
