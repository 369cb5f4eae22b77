//! Spectral Galerkin simulation of fractional Allen–Cahn/nutrient systems
//! with nonsmooth double-well potentials, plus the diagnostics that check
//! energy estimates, stability and the regularization/discretization limit.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod potentials;
pub mod regularize;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
