pub mod analysis;
pub mod cells;
#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod lattice;
pub mod numerics;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
