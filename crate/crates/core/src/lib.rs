//! Monte Carlo kernels for Brownian / SLE(8/3) loop soups, loop clusters,
//! conformal loop ensembles and the statistical experiments built on them.
//!
//! Everything in this crate is deterministic given a seed: samplers take
//! either an explicit 64-bit seed or a substream handle derived from one
//! (see [`rng`]). Values are plain owned data and safe to share across
//! worker threads; replica-level parallelism is left to the caller.

pub mod cle;
pub mod clusters;
pub mod conformal;
pub mod geom;
pub mod loopsoup;
pub mod raster;
pub mod rng;
pub mod sle;
pub mod stats;

pub use geom::{Disc, Loop, PathTrace, Point};
