//! Microwave photons on a Hofstadter lattice with a central vacancy.
//!
//! Energies are in units of the hopping `T` and times in `1/T` unless a spec
//! sets `hopping` to something other than one.

pub mod drive;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod peaks;
pub mod spectrum;
pub mod topology;

pub use error::{Error, Result};
pub use lattice::{Coord, DisorderSpec, Flux, Hamiltonian, LatticeSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
