//! Statistical engine for testing whether per-agent portfolio outcomes deviate
//! from a constrained random-allocation benchmark.
//!
//! The crate is `no_std` and only needs `alloc`. IO, CSV/JSON formats and the
//! command line live in the `allocbench` companion crate.
//!
//! Pipeline, roughly:
//!
//! 1. [`corpus`] turns deal records into per-investor [`corpus::Portfolio`]s.
//! 2. [`resampler`] rebuilds every portfolio from random deals of the same
//!    (year, sector, region) stratum, many times over.
//! 3. [`ks`] compares empirical and benchmark samples with tail-restricted
//!    two-sample Kolmogorov–Smirnov sweeps.
//! 4. [`rankbench`] derives the benchmark distribution of the k-th best
//!    portfolio and scores every observed rank against it.
//!
//! [`analyst`] applies the same idea to forecast errors, and [`synth`]
//! produces corpora with planted skill for calibration.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analyst;
pub mod corpus;
mod error;
pub mod ks;
pub mod math;
pub mod rankbench;
pub mod resampler;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
