//! Tensor-network and Clifford simulation of kicked transverse-field Ising
//! circuits on heavy-hex lattices.

pub mod bptns;
pub mod chain;
pub mod circuits;
pub mod clifford;
pub mod config;
pub mod error;
pub mod exact;
pub mod fidelity;
pub mod heisenberg;
pub mod lattice;
pub mod linalg;
pub mod presets;
pub mod runner;
pub mod schrodinger;
pub mod tt;

pub use error::{Error, Result};
