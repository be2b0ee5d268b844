//! Library side of the experiment driver: file formats, rendering, and
//! the parallel experiment harness shared by the binary and the
//! acceptance suite.

pub mod experiments;
pub mod io;
pub mod render;
