//! Simulation and inference for photon loss induced by qubit dressing of a
//! storage cavity under dephasing noise.
//!
//! The crate is organised around a single physical model: a cavity holding
//! at most one photon, dispersively coupled to a two-level qubit that is
//! repeatedly measured. [`model`] holds the parameter types, [`analytic`]
//! the closed-form survival curves, [`trajectory`] and [`lindblad`] two
//! independent simulators of the same dynamics, and [`inference`] the
//! Bayesian fit of measured curves.

pub mod analysis;
pub mod analytic;
pub mod error;
pub mod inference;
pub mod lindblad;
pub mod model;
pub mod trajectory;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
