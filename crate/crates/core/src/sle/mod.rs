//! Chordal SLE via Loewner chains, the radial angle diffusion, Minkowski
//! content volumes, and the side / disconnection experiments.

mod disconnect;
mod loewner;
mod minkowski;
mod side;
mod theta;

pub use disconnect::{disconnection_fraction, disconnection_fraction_with_gap, DisconnectReport};
pub use loewner::{chordal_sle, ForwardTracker, LoewnerTrace};
pub use minkowski::{loop_minkowski, minkowski_volumes, MinkowskiReport, WeightGrid};
pub use side::{side_probability, SideEstimate};
pub use theta::{radial_theta, ThetaPath};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SleError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("weight grid is too coarse: h = {h}, need <= {need}")]
    GridTooCoarse { h: f64, need: f64 },
    #[error("too few accepted traces: {got} < {need}; raise n or eps")]
    TooFewAcceptances { got: usize, need: usize },
}
