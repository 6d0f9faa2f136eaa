//! Multi-horizon lifetime-value prediction with ordered task dependencies.

pub mod codec;
pub mod data;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
