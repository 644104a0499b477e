//! Simulation and analysis of single atoms in a blue-detuned intracavity
//! dipole trap.

pub mod app;
pub mod config;
pub mod detect;
pub mod dynamics;
pub mod error;
pub mod modes;
pub mod numerics;
pub mod potential;
pub mod qed;
pub mod spectrum;
pub mod units;

pub use error::{Error, Result};
