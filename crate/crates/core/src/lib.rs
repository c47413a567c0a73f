//! Numerical verification suite for the combined low-Mach / thin-layer
//! limit of barotropic Euler flows.

pub mod acoustic2d;
pub mod compressible3d;
pub mod domain;
pub mod error;
pub mod harness;
pub mod incompressible2d;
pub mod initialdata;
pub mod pressure;
pub mod relenergy;
pub mod snapshot;
pub mod spectral;

pub use error::{Error, Result};
