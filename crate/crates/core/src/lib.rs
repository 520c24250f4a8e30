//! Representation-geometry and brain-encoding analysis toolkit.

pub mod adam;
pub mod cli;
pub mod encoding;
pub mod error;
pub mod intrinsic_dim;
pub mod io;
pub mod lens;
pub mod neighbors;
pub mod probes;
pub mod rff;
pub mod signal;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
