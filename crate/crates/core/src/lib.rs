//! Simulation and analysis of quantum oblivious transfer and coin flipping.

pub mod bounds;
pub mod cheat;
pub mod error;
pub mod fot;
pub mod model;
pub mod otcore;
pub mod qlin;
pub mod sdp;

pub use error::{Error, Result};

/// Crate version, echoed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
