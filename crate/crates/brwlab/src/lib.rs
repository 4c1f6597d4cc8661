//! Simulation and estimation toolkit for Gaussian branching random walks on
//! Galton–Watson trees, the continuous random energy model (CREM) on the
//! binary tree, and dyadic multiplicative cascades.
//!
//! Partition functions are computed exactly by streaming tree enumeration in
//! log space, or by Monte Carlo over replica ensembles. The `experiments`
//! module turns the model's phase-transition, universality, and critical-decay
//! predictions into estimable quantities with confidence intervals; the
//! `brwlab` binary wraps everything behind a CLI.
//!
//! Every random draw is a pure function of a seed and a vertex address, so
//! results are bit-reproducible across runs, platforms, and worker counts.

pub mod brw;
pub mod cli;
pub mod crem;
mod error;
pub mod experiments;
pub mod numerics;
pub mod tree;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
