//! Full counting statistics of the heat dissipated when a driven two-level
//! impurity is erased against a finite fermionic chain.

pub mod analysis;
pub mod error;
pub mod fock;
pub mod model;
pub mod numerics;
pub mod quasifree;
pub mod stats;

pub use error::{Error, Result};
