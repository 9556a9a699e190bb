//! Atoms in a unidirectionally pumped ring cavity: self-consistent
//! localization, adiabatic and full particle dynamics, bistability analysis
//! and heating/decay fits.

pub mod adiabatic;
pub mod bistability;
pub mod error;
pub mod full;
pub mod localization;
pub mod ode;
pub mod params;
pub mod thermo;

pub use error::{Error, Result};
