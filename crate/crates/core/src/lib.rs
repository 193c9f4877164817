//! Projected ensembles of U(1)-symmetric random circuits and their universal
//! target ensembles.

pub mod ensembles;
pub mod harness;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod sectors;
pub mod simulator;
pub mod symmetric;
pub mod targets;

pub use error::{Error, Result};
