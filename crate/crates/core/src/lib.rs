//! Frequency-space laboratory for Kirchhoff-type quasilinear wave equations
//! `u″ = (1 + N(‖∇u‖²)) Δu`: spectral states, modified energies, time
//! stepping, and the numerical checks built on them.

pub mod analysis;
pub mod dual;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod nonlinearity;
pub mod spectral;

pub use error::{Error, Result};
