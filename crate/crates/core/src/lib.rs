//! Simulation of quantum state transfer and entanglement distribution through
//! Heisenberg spin chains with nuclear hyperfine and exchange-coupling noise.

pub mod channels;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod noise;
pub mod optctrl;
pub mod spin_model;

pub use error::{Error, Result};
pub use spin_model::{Basis, ChainSpec, Hamiltonian, Phase, Register, SectorBasis};
