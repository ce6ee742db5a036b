//! Steady transonic flow in de Laval nozzles.

pub mod acceptance;
pub mod banded;
pub mod error;
pub mod gas;
pub mod grid;
pub mod interp;
pub mod mixedpde;
pub mod nozzle;
mod par;
pub mod potentialflow;
pub mod problem;
pub mod quasi1d;
pub mod rotational;
pub mod roots;
pub mod shock1d;
pub mod spectral;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
